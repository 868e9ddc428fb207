//! Remote client against an in-process stub bridge.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use base64::Engine;
use partlift::backends::protocol::{DetectRequest, SegmentMode, SegmentRequest};
use partlift::backends::{BackendError, Detector, RemoteClient, RetryPolicy, Segmenter, TextPrompt};
use partlift::formats::decode_png;
use partlift::multiview::{render, Pixel, RenderSettings, EMPTY};
use partlift::scenes::occlusion_fixture;
use partlift::RenderProduct;
use serde_json::{json, Value};

type Handler = dyn Fn(&str, &str, usize) -> (u16, String) + Send + Sync;

struct Stub {
    url: String,
    hits: Arc<AtomicUsize>,
}

/// Serves every request with `handler(path, body, attempt)`, where `attempt`
/// counts requests from zero.
fn stub(handler: impl Fn(&str, &str, usize) -> (u16, String) + Send + Sync + 'static) -> Stub {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let handler: Box<Handler> = Box::new(handler);
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let attempt = counter.fetch_add(1, Ordering::SeqCst);
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let (status, text) = handler(req.url(), &body, attempt);
            let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
            let _ = req.respond(tiny_http::Response::from_string(text).with_status_code(status).with_header(header));
        }
    });
    Stub { url, hits }
}

fn fast_client(url: &str, retries: u32) -> RemoteClient {
    RemoteClient::with_policy(
        url,
        RetryPolicy { retries, base_delay: Duration::from_millis(1) },
        Duration::from_secs(10),
    )
}

fn small_render() -> RenderProduct {
    let fx = occlusion_fixture();
    render(&fx.cloud, &fx.viewpoint, RenderSettings { resolution: 48, splat_radius: 1 })
}

/// Identity-threshold segmenter: the foreground is every non-white pixel.
fn threshold_segment(body: &str) -> (u16, String) {
    let req: SegmentRequest = serde_json::from_str(body).unwrap();
    let png = base64::engine::general_purpose::STANDARD.decode(&req.image_png_b64).unwrap();
    let (w, h, pixels) = decode_png(&png).unwrap();
    let mut flat: Vec<u32> = Vec::new();
    for (i, px) in pixels.iter().enumerate() {
        if *px == [255, 255, 255] {
            continue;
        }
        let i = i as u32;
        match flat.len() {
            n if n >= 2 && flat[n - 2] + flat[n - 1] == i => flat[n - 1] += 1,
            _ => flat.extend([i, 1]),
        }
    }
    (200, json!({"masks": [{"rle": flat, "width": w, "height": h, "score": 0.9}]}).to_string())
}

#[test]
fn health_reports_capabilities() {
    let s = stub(|path, _, _| {
        assert_eq!(path, "/v1/health");
        (200, r#"{"segmenter": true, "detector": false}"#.into())
    });
    let h = fast_client(&s.url, 0).health().unwrap();
    assert!(h.segmenter);
    assert!(!h.detector);
}

#[test]
fn segment_round_trips_through_the_wire_format() {
    let s = stub(|path, body, _| {
        assert_eq!(path, "/v1/segment");
        threshold_segment(body)
    });
    let rp = small_render();
    let client = fast_client(&s.url, 0);
    let seeds = vec![Pixel::new(24, 24), Pixel::new(3, 40)];
    let masks = client.segment_auto(&rp, &seeds).unwrap();
    assert_eq!(masks.len(), 1);
    let expected: Vec<u32> =
        rp.index_map().iter().enumerate().filter(|(_, &p)| p != EMPTY).map(|(c, _)| c as u32).collect();
    assert_eq!(masks[0].cells(), expected);
    assert_eq!((masks[0].width, masks[0].height, masks[0].viewpoint_id), (48, 48, rp.viewpoint_id()));
    assert!((masks[0].score - 0.9).abs() < 1e-6);
    assert_eq!(client.segment_prompted(&rp, &seeds).unwrap(), masks);
}

#[test]
fn request_body_carries_points_and_mode() {
    let s = stub(|_, body, _| {
        let req: SegmentRequest = serde_json::from_str(body).unwrap();
        assert_eq!(req.points, vec![[5, 6], [7, 8]]);
        assert_eq!(req.mode, SegmentMode::Prompt);
        let raw: Value = serde_json::from_str(body).unwrap();
        assert_eq!(raw["mode"], "prompt");
        (200, r#"{"masks": []}"#.into())
    });
    let rp = small_render();
    let masks = fast_client(&s.url, 0).segment_prompted(&rp, &[Pixel::new(5, 6), Pixel::new(7, 8)]).unwrap();
    assert!(masks.is_empty());
    assert_eq!(s.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn out_of_bounds_prompt_is_rejected_locally() {
    let s = stub(|_, _, _| (200, r#"{"masks": []}"#.into()));
    let err = fast_client(&s.url, 0).segment_prompted(&small_render(), &[Pixel::new(48, 0)]).unwrap_err();
    assert!(matches!(err, BackendError::Rejected(_)), "{err:?}");
    assert_eq!(s.hits.load(Ordering::SeqCst), 0);
}

#[test]
fn unavailable_responses_are_retried() {
    let s = stub(|_, body, attempt| if attempt < 2 { (503, "{}".into()) } else { threshold_segment(body) });
    let masks = fast_client(&s.url, 3).segment_auto(&small_render(), &[]).unwrap();
    assert_eq!(masks.len(), 1);
    assert_eq!(s.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn retries_give_up_after_the_budget() {
    let s = stub(|_, _, _| (503, "{}".into()));
    let err = fast_client(&s.url, 2).segment_auto(&small_render(), &[]).unwrap_err();
    assert!(matches!(err, BackendError::Unavailable(_)), "{err:?}");
    assert_eq!(s.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let s = stub(|_, _, _| (422, r#"{"detail": "bad image"}"#.into()));
    let err = fast_client(&s.url, 3).segment_auto(&small_render(), &[]).unwrap_err();
    assert!(matches!(err, BackendError::Rejected(_)), "{err:?}");
    assert_eq!(s.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_bridge_is_unavailable() {
    let url = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", listener.local_addr().unwrap())
    };
    let err = fast_client(&url, 1).health().unwrap_err();
    assert!(err.is_retryable(), "{err:?}");
}

#[test]
fn malformed_masks_are_protocol_errors() {
    let cases = [
        r#"{"masks": [{"rle": [0, 3, 1], "width": 48, "height": 48, "score": 1}]}"#,
        r#"{"masks": [{"rle": [0, 3, 2, 2], "width": 48, "height": 48, "score": 1}]}"#,
        r#"{"masks": [{"rle": [2300, 5], "width": 48, "height": 48, "score": 1}]}"#,
        r#"{"masks": [{"rle": [0, 1], "width": 32, "height": 48, "score": 1}]}"#,
        r#"{"boxes": []}"#,
        "not json",
    ];
    for body in cases {
        let s = stub(move |_, _, _| (200, body.into()));
        let err = fast_client(&s.url, 3).segment_auto(&small_render(), &[]).unwrap_err();
        assert!(matches!(err, BackendError::Protocol(_)), "{body}: {err:?}");
        assert_eq!(s.hits.load(Ordering::SeqCst), 1, "{body}");
    }
}

#[test]
fn detect_round_trips_boxes() {
    let s = stub(|path, body, _| {
        assert_eq!(path, "/v1/detect");
        let req: DetectRequest = serde_json::from_str(body).unwrap();
        assert_eq!(req.classes, ["frame", "panel"]);
        (200, r#"{"boxes": [{"class_index": 1, "x0": 2, "y0": 3, "x1": 40, "y1": 47, "score": 0.5}]}"#.into())
    });
    let rp = small_render();
    let prompt = TextPrompt::parse("frame,panel").unwrap();
    let boxes = fast_client(&s.url, 0).detect(&rp, &prompt).unwrap();
    assert_eq!(boxes.len(), 1);
    let b = &boxes[0];
    assert_eq!((b.viewpoint_id, b.class_index, b.x0, b.y0, b.x1, b.y1), (rp.viewpoint_id(), 1, 2, 3, 40, 47));
    assert!((b.score - 0.5).abs() < 1e-6);
}

#[test]
fn invalid_boxes_are_protocol_errors() {
    let cases = [
        r#"{"boxes": [{"class_index": 2, "x0": 0, "y0": 0, "x1": 1, "y1": 1, "score": 1}]}"#,
        r#"{"boxes": [{"class_index": 0, "x0": 5, "y0": 0, "x1": 4, "y1": 1, "score": 1}]}"#,
        r#"{"boxes": [{"class_index": 0, "x0": 0, "y0": 0, "x1": 48, "y1": 1, "score": 1}]}"#,
    ];
    let prompt = TextPrompt::parse("frame,panel").unwrap();
    for body in cases {
        let s = stub(move |_, _, _| (200, body.into()));
        let err = fast_client(&s.url, 0).detect(&small_render(), &prompt).unwrap_err();
        assert!(matches!(err, BackendError::Protocol(_)), "{body}: {err:?}");
    }
}
