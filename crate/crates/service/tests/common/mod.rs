//! Shared fixtures for the service integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use tourguide_core::gateway::{Backend, BackendError, BackendHandle, BackendKind, ChunkStream, TokenChunk};
use tourguide_core::prompt::{RenderedPrompt, SPOT_EXTRACTION_TEMPLATE};
use tourguide_core::simulate::SimulationScript;
use tourguide_service::manager::{BackendFactory, Channel};
use tourguide_service::wire::{WireBody, WireMessage};

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn kyoto_script() -> SimulationScript {
    SimulationScript::load(&scenario_dir().join("kyoto_day_trip.script")).expect("scenario script parses")
}

pub fn script_factory(script: SimulationScript, max_retries: u32) -> BackendFactory {
    Arc::new(move || Ok(script.backend().with_max_retries(max_retries)))
}

/// Never emits the sign. Answers spot extraction with two known spots.
pub struct NoSignBackend;

pub const NO_SIGN_REPLY: &str = "かしこまりました。ほかにご希望はございますか？";

impl Backend for NoSignBackend {
    fn open(&self, prompt: &RenderedPrompt) -> Result<ChunkStream, BackendError> {
        let reply = if prompt.template_id == SPOT_EXTRACTION_TEMPLATE { "SPOTS: 清水寺、金閣寺" } else { NO_SIGN_REPLY };
        Ok(Box::new(std::iter::once(Ok(TokenChunk::new(reply, true)))))
    }
}

pub fn no_sign_backend() -> BackendHandle {
    BackendHandle::new(BackendKind::ScriptedMock, "no-sign", Arc::new(NoSignBackend))
}

/// Polls the channel log until `done` holds, or panics after `timeout`.
pub async fn wait_for(channel: &Channel, timeout: Duration, done: impl Fn(&[WireMessage]) -> bool) -> Vec<WireMessage> {
    let deadline = tokio::time::Instant::now() + timeout;
    loop {
        let log = channel.log();
        if done(&log) {
            return log;
        }
        if tokio::time::Instant::now() > deadline {
            panic!("timed out; log has {} messages", log.len());
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

pub fn closed(log: &[WireMessage]) -> bool {
    log.iter().any(|m| matches!(m.body, WireBody::SessionClosed { .. }))
}
