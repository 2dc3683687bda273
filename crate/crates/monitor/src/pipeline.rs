use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::sync::Mutex;
use std::time::Duration;

use hkcd_core::augment::NormalizationConstants;
use hkcd_core::{BinaryMask, ImageBuffer};
use hkcd_harness::{load_model, predict_images, ModelPredictor};
use hkcd_model::Hcdn;
use serde::{Deserialize, Serialize};

use crate::error::{MonitorError, Result};
use crate::source::{grab_frames, FrameSource};

pub const DEFAULT_THRESHOLD: f64 = 0.10;

/// Turns a frame, and optionally the clean reference view, into a mask.
pub trait ChangeDetector {
    fn detect(&self, frame: &ImageBuffer, reference: Option<&ImageBuffer>) -> Result<BinaryMask>;
}

/// A trained checkpoint. Without a reference image the good input is
/// blacked out and the model acts as a single-image segmenter.
pub struct ModelDetector {
    model: Hcdn,
    resize: Option<[usize; 2]>,
    consts: NormalizationConstants,
}

impl ModelDetector {
    pub fn load(checkpoint: &Path, resize: Option<[usize; 2]>, consts: NormalizationConstants) -> Result<Self> {
        let model = load_model(checkpoint, None).map_err(|e| MonitorError::ModelLoadFailure(e.to_string()))?;
        Ok(Self { model, resize, consts })
    }

    pub fn from_model(model: Hcdn, resize: Option<[usize; 2]>, consts: NormalizationConstants) -> Self {
        Self { model, resize, consts }
    }
}

impl ChangeDetector for ModelDetector {
    fn detect(&self, frame: &ImageBuffer, reference: Option<&ImageBuffer>) -> Result<BinaryMask> {
        let predictor = ModelPredictor::new(&self.model);
        Ok(predict_images(&predictor, frame, reference, self.resize, &self.consts)?)
    }
}

/// Wire format of one alert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertPayload {
    pub frame_id: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub change_ratio: f64,
    pub mask_uri: Option<String>,
    pub source: String,
}

pub trait AlertSink {
    /// Fails with [`MonitorError::SinkUnavailable`].
    fn deliver(&self, payload: &AlertPayload) -> Result<()>;
}

/// POSTs each payload as JSON.
pub struct WebhookSink {
    url: String,
    client: reqwest::blocking::Client,
}

impl WebhookSink {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| MonitorError::SinkUnavailable(e.to_string()))?;
        Ok(Self { url: url.into(), client })
    }
}

impl AlertSink for WebhookSink {
    fn deliver(&self, payload: &AlertPayload) -> Result<()> {
        self.client
            .post(&self.url)
            .json(payload)
            .send()
            .and_then(|r| r.error_for_status())
            .map(drop)
            .map_err(|e| MonitorError::SinkUnavailable(e.to_string()))
    }
}

/// Keeps payloads in memory.
#[derive(Debug, Default)]
pub struct RecordingSink {
    delivered: Mutex<Vec<AlertPayload>>,
}

impl RecordingSink {
    pub fn delivered(&self) -> Vec<AlertPayload> {
        self.delivered.lock().expect("sink lock").clone()
    }
}

impl AlertSink for RecordingSink {
    fn deliver(&self, payload: &AlertPayload) -> Result<()> {
        self.delivered.lock().expect("sink lock").push(payload.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeliveryStatus {
    BelowThreshold,
    Delivered,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub frame_index: usize,
    pub frame_id: String,
    pub change_ratio: f64,
    pub status: DeliveryStatus,
}

impl DeliveryRecord {
    pub fn alerted(&self) -> bool {
        self.status != DeliveryStatus::BelowThreshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    /// Alert when the changed fraction of the frame reaches this.
    pub threshold: f64,
    /// Decoded frames waiting for inference.
    pub queue_capacity: usize,
    /// Where masks of alerting frames are written, if anywhere.
    pub mask_dir: Option<PathBuf>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            queue_capacity: 4,
            mask_dir: None,
        }
    }
}

pub fn change_ratio(mask: &BinaryMask) -> f64 {
    mask.count_ones() as f64 / mask.len() as f64
}

/// Samples frames on a producer thread and runs detection and alerting on
/// the caller's thread, one frame at a time. Sink failures are recorded and
/// processing continues.
pub fn detect_and_alert(
    source: &FrameSource,
    reference: Option<&ImageBuffer>,
    detector: &dyn ChangeDetector,
    sink: &dyn AlertSink,
    cfg: &MonitorConfig,
) -> Result<Vec<DeliveryRecord>> {
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(MonitorError::InvalidThreshold(cfg.threshold));
    }
    if let Some(dir) = &cfg.mask_dir {
        std::fs::create_dir_all(dir).map_err(|e| MonitorError::UnreadableSource {
            path: dir.clone(),
            reason: e.to_string(),
        })?;
    }
    let (tx, rx) = sync_channel(cfg.queue_capacity.max(1));
    std::thread::scope(|scope| {
        scope.spawn(move || {
            let frames = match grab_frames(source) {
                Ok(f) => f,
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            };
            for frame in frames {
                // a closed channel means the consumer gave up
                if tx.send(frame).is_err() {
                    return;
                }
            }
        });

        let mut records = Vec::new();
        for frame in rx {
            let frame = frame?;
            let mask = detector.detect(&frame.image, reference)?;
            let ratio = change_ratio(&mask);
            let status = if ratio >= cfg.threshold {
                let mask_uri = match &cfg.mask_dir {
                    Some(dir) => {
                        let path = dir.join(format!("{}.png", frame.id));
                        mask.save(&path)?;
                        Some(path.to_string_lossy().into_owned())
                    }
                    None => None,
                };
                let payload = AlertPayload {
                    frame_id: frame.id.clone(),
                    timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                    change_ratio: ratio,
                    mask_uri,
                    source: frame.origin.to_string_lossy().into_owned(),
                };
                match sink.deliver(&payload) {
                    Ok(()) => {
                        log::info!("frame {}: change ratio {ratio:.3}, alert delivered", frame.id);
                        DeliveryStatus::Delivered
                    }
                    Err(e) => {
                        log::warn!("frame {}: alert delivery failed: {e}", frame.id);
                        DeliveryStatus::Failed { reason: e.to_string() }
                    }
                }
            } else {
                DeliveryStatus::BelowThreshold
            };
            records.push(DeliveryRecord {
                frame_index: frame.index,
                frame_id: frame.id,
                change_ratio: ratio,
                status,
            });
        }
        Ok(records)
    })
}
