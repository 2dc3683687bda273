use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::time::Duration;

use hkcd_core::{BinaryMask, ImageBuffer};
use hkcd_monitor::*;
use image::codecs::gif::GifEncoder;
use proptest::prelude::*;

fn write_frames(dir: &Path, n: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let v = (i * 20) as u8;
        ImageBuffer::filled(8, 8, [v, v, v]).unwrap().save(&dir.join(format!("frame_{i:03}.png"))).unwrap();
    }
    std::fs::write(dir.join("notes.txt"), "not a frame").unwrap();
}

fn indices(source: &FrameSource) -> Vec<usize> {
    grab_frames(source).unwrap().map(|f| f.unwrap().index).collect()
}

#[test]
fn directory_sampling() {
    let tmp = tempfile::tempdir().unwrap();
    write_frames(tmp.path(), 10);
    assert_eq!(indices(&FrameSource::detect(tmp.path(), 5).unwrap()), [0, 5]);
    assert_eq!(indices(&FrameSource::detect(tmp.path(), 1).unwrap()), (0..10).collect::<Vec<_>>());
    assert_eq!(indices(&FrameSource::detect(tmp.path(), 3).unwrap()), [0, 3, 6, 9]);
    let frames: Vec<Frame> = grab_frames(&FrameSource::detect(tmp.path(), 1).unwrap()).unwrap().map(Result::unwrap).collect();
    assert_eq!(frames[4].id, "frame_004");
    assert_eq!(frames[4].image.pixel(0, 0), [80, 80, 80]);

    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert!(indices(&FrameSource::detect(&empty, 2).unwrap()).is_empty());
}

#[test]
fn bad_sources() {
    assert!(matches!(FrameSource::detect("/nonexistent", 0), Err(MonitorError::InvalidInterval)));
    let missing = FrameSource::new(SourceKind::Directory, "/nonexistent/frames", 1).unwrap();
    assert!(matches!(grab_frames(&missing), Err(MonitorError::UnreadableSource { .. })));
    let missing = FrameSource::new(SourceKind::VideoFile, "/nonexistent/clip.gif", 1).unwrap();
    assert!(matches!(grab_frames(&missing), Err(MonitorError::UnreadableSource { .. })));
}

#[test]
fn gif_sampling() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("clip.gif");
    let mut enc = GifEncoder::new(std::fs::File::create(&path).unwrap());
    for i in 0..7u8 {
        let img = image::RgbaImage::from_pixel(6, 4, image::Rgba([i * 30, 0, 0, 255]));
        enc.encode_frame(image::Frame::new(img)).unwrap();
    }
    drop(enc);
    let frames: Vec<Frame> = grab_frames(&FrameSource::detect(&path, 3).unwrap()).unwrap().map(Result::unwrap).collect();
    assert_eq!(frames.iter().map(|f| f.index).collect::<Vec<_>>(), [0, 3, 6]);
    assert_eq!(frames[1].id, "clip_000003");
    assert_eq!(frames[1].image.dims(), (4, 6));
    assert!(frames[1].image.pixel(0, 0)[0].abs_diff(90) <= 2);
}

/// Marks the first `brightness/255` of the rows as changed.
struct Brightness;

impl ChangeDetector for Brightness {
    fn detect(&self, frame: &ImageBuffer, _: Option<&ImageBuffer>) -> hkcd_monitor::Result<BinaryMask> {
        let (h, w) = frame.dims();
        let rows = (frame.pixel(0, 0)[0] as usize * h) / 255;
        Ok(BinaryMask::from_fn(h, w, |y, _| y < rows)?)
    }
}

struct Constant(bool);

impl ChangeDetector for Constant {
    fn detect(&self, frame: &ImageBuffer, _: Option<&ImageBuffer>) -> hkcd_monitor::Result<BinaryMask> {
        let (h, w) = frame.dims();
        Ok(if self.0 { BinaryMask::ones(h, w)? } else { BinaryMask::zeros(h, w)? })
    }
}

fn cfg(threshold: f64) -> MonitorConfig {
    MonitorConfig {
        threshold,
        ..MonitorConfig::default()
    }
}

#[test]
fn stub_detectors() {
    let tmp = tempfile::tempdir().unwrap();
    write_frames(tmp.path(), 6);
    let source = FrameSource::detect(tmp.path(), 2).unwrap();
    for t in [0.01, 0.1, 0.5, 1.0] {
        let sink = RecordingSink::default();
        let records = detect_and_alert(&source, None, &Constant(false), &sink, &cfg(t)).unwrap();
        assert_eq!(records.len(), 3);
        assert!(sink.delivered().is_empty());
    }
    let sink = RecordingSink::default();
    let records = detect_and_alert(&source, None, &Constant(true), &sink, &cfg(0.5)).unwrap();
    assert!(records.iter().all(|r| r.status == DeliveryStatus::Delivered && r.change_ratio == 1.0));
    let sent = sink.delivered();
    assert_eq!(sent.len(), 3);
    assert_eq!(sent.iter().map(|p| p.frame_id.as_str()).collect::<Vec<_>>(), ["frame_000", "frame_002", "frame_004"]);
    assert!(sent[0].source.ends_with("frame_000.png"));
    assert!(chrono::DateTime::parse_from_rfc3339(&sent[0].timestamp).is_ok());
    assert!(matches!(
        detect_and_alert(&source, None, &Constant(true), &sink, &cfg(1.5)),
        Err(MonitorError::InvalidThreshold(_))
    ));
}

#[test]
fn mask_artifacts_are_written_for_alerts() {
    let tmp = tempfile::tempdir().unwrap();
    write_frames(&tmp.path().join("frames"), 3);
    let source = FrameSource::detect(tmp.path().join("frames"), 1).unwrap();
    let masks = tmp.path().join("masks");
    let config = MonitorConfig {
        threshold: 0.3,
        mask_dir: Some(masks.clone()),
        ..MonitorConfig::default()
    };
    let sink = RecordingSink::default();
    detect_and_alert(&source, None, &Brightness, &sink, &config).unwrap();
    // brightness 0, 20, 40 → ratios 0, 0, 1/8: nothing alerts at 0.3
    assert!(sink.delivered().is_empty());
    let config = MonitorConfig { threshold: 0.1, ..config };
    detect_and_alert(&source, None, &Brightness, &sink, &config).unwrap();
    let sent = sink.delivered();
    assert_eq!(sent.len(), 1);
    let uri = sent[0].mask_uri.clone().unwrap();
    assert_eq!(BinaryMask::load(Path::new(&uri)).unwrap().count_ones(), 8);
}

#[test]
fn refusing_sink_does_not_stop_processing() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    // the listener is gone, so connections are refused
    let sink = WebhookSink::new(format!("http://127.0.0.1:{port}/alerts"), Duration::from_secs(2)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    write_frames(tmp.path(), 5);
    let source = FrameSource::detect(tmp.path(), 1).unwrap();
    let records = detect_and_alert(&source, None, &Constant(true), &sink, &cfg(0.1)).unwrap();
    assert_eq!(records.iter().map(|r| r.frame_index).collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
    assert!(records.iter().all(|r| matches!(r.status, DeliveryStatus::Failed { .. })));
}

fn serve(listener: TcpListener, requests: usize) -> std::thread::JoinHandle<Vec<serde_json::Value>> {
    std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            assert!(request_line.starts_with("POST /alerts"));
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            bodies.push(serde_json::from_slice(&body).unwrap());
            stream.write_all(b"HTTP/1.1 200 OK\r\nContent-Length: 0\r\nConnection: close\r\n\r\n").unwrap();
        }
        bodies
    })
}

#[test]
fn webhook_posts_the_wire_format() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/alerts", listener.local_addr().unwrap());
    let server = serve(listener, 2);
    let tmp = tempfile::tempdir().unwrap();
    write_frames(tmp.path(), 4);
    let sink = WebhookSink::new(url, Duration::from_secs(5)).unwrap();
    let source = FrameSource::detect(tmp.path(), 2).unwrap();
    let records = detect_and_alert(&source, None, &Constant(true), &sink, &cfg(0.1)).unwrap();
    assert!(records.iter().all(|r| r.status == DeliveryStatus::Delivered));
    let bodies = server.join().unwrap();
    assert_eq!(bodies.len(), 2);
    let mut keys: Vec<&str> = bodies[0].as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["change_ratio", "frame_id", "mask_uri", "source", "timestamp"]);
    assert_eq!(bodies[1]["frame_id"], "frame_002");
    assert_eq!(bodies[1]["change_ratio"], 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn alerts_are_monotone_in_threshold(levels in prop::collection::vec(0u8..=255, 1..8), mut ts in prop::collection::vec(0.0f64..=1.0, 3)) {
        let tmp = tempfile::tempdir().unwrap();
        for (i, &v) in levels.iter().enumerate() {
            ImageBuffer::filled(16, 4, [v, 0, 0]).unwrap().save(&tmp.path().join(format!("f{i:02}.png"))).unwrap();
        }
        let source = FrameSource::detect(tmp.path(), 1).unwrap();
        ts.sort_by(f64::total_cmp);
        let alerted: Vec<Vec<bool>> = ts.iter().map(|&t| {
            let records = detect_and_alert(&source, None, &Brightness, &RecordingSink::default(), &cfg(t)).unwrap();
            records.iter().map(DeliveryRecord::alerted).collect()
        }).collect();
        for pair in alerted.windows(2) {
            // anything alerting at the higher threshold alerts at the lower one
            prop_assert!(pair[0].iter().zip(&pair[1]).all(|(&lo, &hi)| lo || !hi));
        }
    }
}

#[test]
fn model_detector_from_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(
        ModelDetector::load(&tmp.path().join("missing.ckpt"), None, Default::default()),
        Err(MonitorError::ModelLoadFailure(_))
    ));
    let model = hkcd_model::Hcdn::new(hkcd_model::ModelConfig::toy(), hkcd_model::DType::F32).unwrap();
    let ckpt = tmp.path().join("toy.ckpt");
    model.save_checkpoint(&ckpt, Default::default()).unwrap();
    let detector = ModelDetector::load(&ckpt, Some([16, 16]), Default::default()).unwrap();
    let frame = ImageBuffer::filled(20, 28, [120, 60, 30]).unwrap();
    let reference = ImageBuffer::filled(10, 14, [100, 100, 100]).unwrap();
    assert_eq!(detector.detect(&frame, Some(&reference)).unwrap().dims(), (20, 28));
    assert_eq!(detector.detect(&frame, None).unwrap().dims(), (20, 28));
}
