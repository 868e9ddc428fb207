use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RleError {
    #[error("run list has odd length {0}")]
    OddLength(usize),
    #[error("run {index} is empty")]
    EmptyRun { index: usize },
    #[error("run {index} overlaps or precedes the previous run")]
    Unordered { index: usize },
    #[error("run {index} ends at {end}, beyond the {cells}-cell raster")]
    OutOfRange { index: usize, end: u64, cells: u64 },
}

/// Foreground cells as `(start, length)` runs over row-major offsets.
/// Runs are ascending, non-empty and non-adjacent (maximal).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Rle {
    runs: Vec<(u32, u32)>,
}

impl Rle {
    /// Encodes sorted, duplicate-free cell offsets.
    pub fn encode(cells: &[u32]) -> Self {
        let mut runs: Vec<(u32, u32)> = Vec::new();
        for &c in cells {
            match runs.last_mut() {
                Some((start, len)) if *start + *len == c => *len += 1,
                _ => runs.push((c, 1)),
            }
        }
        Self { runs }
    }

    pub fn decode(&self) -> Vec<u32> {
        self.runs.iter().flat_map(|&(s, l)| s..s + l).collect()
    }

    pub fn runs(&self) -> &[(u32, u32)] {
        &self.runs
    }

    pub fn area(&self) -> usize {
        self.runs.iter().map(|&(_, l)| l as usize).sum()
    }

    /// Wire form: `[start, len, start, len, ...]`.
    pub fn to_flat(&self) -> Vec<u32> {
        self.runs.iter().flat_map(|&(s, l)| [s, l]).collect()
    }

    /// Parses the wire form, validating it against a raster of `cells` cells.
    /// Adjacent runs are accepted and coalesced.
    pub fn from_flat(flat: &[u32], cells: u64) -> Result<Self, RleError> {
        if !flat.len().is_multiple_of(2) {
            return Err(RleError::OddLength(flat.len()));
        }
        let mut runs: Vec<(u32, u32)> = Vec::with_capacity(flat.len() / 2);
        let mut prev_end = 0u64;
        for (index, pair) in flat.chunks_exact(2).enumerate() {
            let (start, len) = (pair[0], pair[1]);
            if len == 0 {
                return Err(RleError::EmptyRun { index });
            }
            if index > 0 && (start as u64) < prev_end {
                return Err(RleError::Unordered { index });
            }
            let end = start as u64 + len as u64;
            if end > cells {
                return Err(RleError::OutOfRange { index, end, cells });
            }
            match runs.last_mut() {
                Some((s, l)) if *s as u64 + *l as u64 == start as u64 => *l += len,
                _ => runs.push((start, len)),
            }
            prev_end = end;
        }
        Ok(Self { runs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encodes_runs() {
        let rle = Rle::encode(&[0, 1, 2, 5, 7, 8]);
        assert_eq!(rle.to_flat(), vec![0, 3, 5, 1, 7, 2]);
        assert_eq!(rle.area(), 6);
        assert_eq!(Rle::encode(&[]).to_flat(), Vec::<u32>::new());
    }

    #[test]
    fn rejects_bad_wire_data() {
        assert_eq!(Rle::from_flat(&[1, 2, 3], 10).unwrap_err(), RleError::OddLength(3));
        assert_eq!(Rle::from_flat(&[1, 0], 10).unwrap_err(), RleError::EmptyRun { index: 0 });
        assert_eq!(Rle::from_flat(&[4, 2, 5, 1], 10).unwrap_err(), RleError::Unordered { index: 1 });
        assert_eq!(Rle::from_flat(&[8, 3], 10).unwrap_err(), RleError::OutOfRange { index: 0, end: 11, cells: 10 });
        assert_eq!(Rle::from_flat(&[0, 2, 2, 3], 10).unwrap().to_flat(), vec![0, 5]);
    }

    proptest! {
        #[test]
        fn roundtrip(cells in proptest::collection::btree_set(0u32..5000, 0..400)) {
            let cells: Vec<u32> = cells.into_iter().collect();
            let rle = Rle::encode(&cells);
            prop_assert_eq!(rle.decode(), cells.clone());
            prop_assert_eq!(Rle::from_flat(&rle.to_flat(), 5000).unwrap(), rle);
        }
    }
}
