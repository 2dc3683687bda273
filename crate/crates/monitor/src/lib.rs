//! Frame sampling, change detection against a reference view, and alert
//! delivery to a pluggable sink.

pub mod error;
pub mod pipeline;
pub mod source;

pub use crate::error::{MonitorError, Result};
pub use crate::pipeline::{
    change_ratio, detect_and_alert, AlertPayload, AlertSink, ChangeDetector, DeliveryRecord, DeliveryStatus,
    ModelDetector, MonitorConfig, RecordingSink, WebhookSink, DEFAULT_THRESHOLD,
};
pub use crate::source::{grab_frames, Frame, FrameSource, FrameStream, SourceKind};
