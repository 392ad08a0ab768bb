//! Streaming language-model backends and the speech pipeline on top of them.
//!
//! [`BackendHandle::complete_streaming`] opens a chunk stream with retry.
//! [`stream_speech`] runs that stream through sign removal and punctuation
//! segmentation so each segment can be delivered while generation continues.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{RenderedPrompt, CUSTOMER_LABEL, SYSTEM_LABEL};
use crate::segment::{PunctuationSet, Segmenter, SpeechSegment};
use crate::sign::SignFilter;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenChunk {
    pub text: String,
    #[serde(rename = "final")]
    pub is_final: bool,
}

impl TokenChunk {
    pub fn new(text: impl Into<String>, is_final: bool) -> Self {
        Self { text: text.into(), is_final }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    Timeout,
    Unavailable,
    Malformed,
    Exhausted,
}

impl FailureKind {
    /// Transient failures are retried by the handle.
    pub fn is_transient(self) -> bool {
        matches!(self, FailureKind::Timeout | FailureKind::Unavailable)
    }
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::Timeout => "timeout",
            FailureKind::Unavailable => "backend-unavailable",
            FailureKind::Malformed => "malformed-response",
            FailureKind::Exhausted => "script-exhausted",
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{kind}: {detail}")]
pub struct BackendError {
    pub kind: FailureKind,
    pub detail: String,
}

impl BackendError {
    pub fn new(kind: FailureKind, detail: impl Into<String>) -> Self {
        Self { kind, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("{source} (after {attempts} attempt(s))")]
    Backend { source: BackendError, attempts: u32 },
}

impl GatewayError {
    pub fn kind(&self) -> Option<FailureKind> {
        match self {
            GatewayError::EmptyPrompt => None,
            GatewayError::Backend { source, .. } => Some(source.kind),
        }
    }
}

pub type ChunkStream = Box<dyn Iterator<Item = Result<TokenChunk, BackendError>> + Send>;

/// A completion source. One `open` is one attempt.
pub trait Backend: Send + Sync {
    fn open(&self, prompt: &RenderedPrompt) -> Result<ChunkStream, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    ScriptedMock,
    EchoMock,
    Remote,
}

/// Outcome of one backend attempt, as recorded in transcripts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOutcome {
    Completed(String),
    Failed(FailureKind),
}

/// A backend plus the retry policy used to reach it.
#[derive(Clone)]
pub struct BackendHandle {
    pub kind: BackendKind,
    pub model_id: String,
    pub timeout: Duration,
    pub max_retries: u32,
    backend: Arc<dyn Backend>,
}

impl fmt::Debug for BackendHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendHandle")
            .field("kind", &self.kind)
            .field("model_id", &self.model_id)
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .finish_non_exhaustive()
    }
}

impl BackendHandle {
    pub fn new(kind: BackendKind, model_id: impl Into<String>, backend: Arc<dyn Backend>) -> Self {
        Self { kind, model_id: model_id.into(), timeout: Duration::from_secs(30), max_retries: 1, backend }
    }

    pub fn scripted(script: ScriptedBackend) -> Self {
        Self::new(BackendKind::ScriptedMock, "scripted-mock", Arc::new(script))
    }

    pub fn echo() -> Self {
        Self::new(BackendKind::EchoMock, "echo-mock", Arc::new(EchoBackend))
    }

    pub fn remote(config: RemoteConfig, max_retries: u32) -> Self {
        let timeout = config.timeout;
        let model = config.model_id.clone();
        Self { kind: BackendKind::Remote, model_id: model, timeout, max_retries, backend: Arc::new(RemoteBackend::new(config)) }
    }

    pub fn with_max_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    /// Opens a chunk stream, retrying transient failures up to `max_retries`
    /// times. Every attempt's failure is appended to `tape`; the caller records
    /// the completion once the stream is consumed.
    pub fn complete_streaming(
        &self,
        prompt: &RenderedPrompt,
        tape: &mut Vec<CallOutcome>,
    ) -> Result<ChunkStream, GatewayError> {
        if prompt.text.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.backend.open(prompt) {
                Ok(stream) => return Ok(stream),
                Err(err) => {
                    tape.push(CallOutcome::Failed(err.kind));
                    tracing::warn!(attempt = attempts, error = %err, "backend attempt failed");
                    if !err.kind.is_transient() || attempts > self.max_retries {
                        return Err(GatewayError::Backend { source: err, attempts });
                    }
                }
            }
        }
    }

    /// Runs a completion to the end without speech delivery.
    pub fn complete(&self, prompt: &RenderedPrompt, tape: &mut Vec<CallOutcome>) -> Result<String, GatewayError> {
        let stream = self.complete_streaming(prompt, tape)?;
        let raw = drain_stream(stream, tape)?;
        Ok(raw)
    }
}

fn drain_stream(stream: ChunkStream, tape: &mut Vec<CallOutcome>) -> Result<String, GatewayError> {
    let mut raw = String::new();
    let mut finals = 0;
    for chunk in stream {
        let chunk = chunk.map_err(|source| {
            tape.push(CallOutcome::Failed(source.kind));
            GatewayError::Backend { source, attempts: 1 }
        })?;
        raw.push_str(&chunk.text);
        finals += u32::from(chunk.is_final);
    }
    check_final_count(finals, tape)?;
    tape.push(CallOutcome::Completed(raw.clone()));
    Ok(raw)
}

fn check_final_count(finals: u32, tape: &mut Vec<CallOutcome>) -> Result<(), GatewayError> {
    if finals != 1 {
        tape.push(CallOutcome::Failed(FailureKind::Malformed));
        return Err(GatewayError::Backend {
            source: BackendError::new(FailureKind::Malformed, format!("stream had {finals} final chunks")),
            attempts: 1,
        });
    }
    Ok(())
}

/// A finished streamed completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    /// The model output as generated, sign included.
    pub raw: String,
    pub segments: Vec<SpeechSegment>,
}

/// Streams a completion into speech segments.
///
/// The sign is removed before segmentation, so neither `emit` nor the
/// returned segments ever see it. Segments reach `emit` as soon as they close.
pub fn stream_speech(
    handle: &BackendHandle,
    prompt: &RenderedPrompt,
    punctuation: &PunctuationSet,
    tape: &mut Vec<CallOutcome>,
    emit: &mut dyn FnMut(&SpeechSegment),
) -> Result<Completion, GatewayError> {
    let stream = handle.complete_streaming(prompt, tape)?;
    let mut raw = String::new();
    let mut filter = SignFilter::new();
    let mut segmenter = Segmenter::new(punctuation.clone());
    let mut segments = Vec::new();
    let mut finals = 0;
    let mut deliver = |segment: SpeechSegment| {
        emit(&segment);
        segments.push(segment);
    };
    for chunk in stream {
        let chunk = chunk.map_err(|source| {
            tape.push(CallOutcome::Failed(source.kind));
            GatewayError::Backend { source, attempts: 1 }
        })?;
        raw.push_str(&chunk.text);
        finals += u32::from(chunk.is_final);
        segmenter.push(&filter.push(&chunk.text), &mut deliver);
    }
    segmenter.push(&filter.finish(), &mut deliver);
    if let Some(last) = segmenter.finish() {
        deliver(last);
    }
    check_final_count(finals, tape)?;
    tape.push(CallOutcome::Completed(raw.clone()));
    Ok(Completion { raw, segments })
}

/// One scripted backend response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptEntry {
    Reply(String),
    Fail(FailureKind),
}

impl From<&CallOutcome> for ScriptEntry {
    fn from(value: &CallOutcome) -> Self {
        match value {
            CallOutcome::Completed(text) => ScriptEntry::Reply(text.clone()),
            CallOutcome::Failed(kind) => ScriptEntry::Fail(*kind),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("reading script {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: unknown directive {directive:?}")]
    UnknownDirective { line: usize, directive: String },
}

/// Replays a fixed list of completions in order, one per attempt.
///
/// Replies are cut into chunks of `chunk_chars` characters; the last chunk
/// carries the final flag.
#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Mutex<VecDeque<ScriptEntry>>,
    chunk_chars: usize,
    chunk_delay: Duration,
}

impl ScriptedBackend {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        Self { entries: Mutex::new(entries.into_iter().collect()), chunk_chars: 4, chunk_delay: Duration::ZERO }
    }

    pub fn from_replies<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(replies.into_iter().map(|r| ScriptEntry::Reply(r.into())))
    }

    pub fn with_chunk_chars(mut self, chunk_chars: usize) -> Self {
        self.chunk_chars = chunk_chars.max(1);
        self
    }

    /// Sleeps between chunks, for exercising slow backends.
    pub fn with_chunk_delay(mut self, delay: Duration) -> Self {
        self.chunk_delay = delay;
        self
    }

    /// Parses the script file format: one completion per line, `\n` and `\\`
    /// escapes, blank lines skipped. A line that is exactly `@timeout`,
    /// `@unavailable` or `@malformed` scripts a failed attempt.
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(parse_script_line(line, i + 1)?);
        }
        Ok(Self::new(entries))
    }

    pub fn from_file(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScriptError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn remaining(&self) -> usize {
        self.entries.lock().expect("script lock").len()
    }
}

pub(crate) fn parse_script_line(line: &str, line_no: usize) -> Result<ScriptEntry, ScriptError> {
    if let Some(directive) = line.strip_prefix('@') {
        let kind = match directive.trim() {
            "timeout" => FailureKind::Timeout,
            "unavailable" => FailureKind::Unavailable,
            "malformed" => FailureKind::Malformed,
            other => return Err(ScriptError::UnknownDirective { line: line_no, directive: other.to_owned() }),
        };
        return Ok(ScriptEntry::Fail(kind));
    }
    Ok(ScriptEntry::Reply(unescape(line)))
}

pub fn unescape(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some('@') => out.push('@'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Inverse of [`unescape`] for writing script lines.
pub fn escape(text: &str) -> String {
    let escaped = text.replace('\\', "\\\\").replace('\n', "\\n");
    if escaped.starts_with('@') {
        format!("\\{escaped}")
    } else {
        escaped
    }
}

impl Backend for ScriptedBackend {
    fn open(&self, _prompt: &RenderedPrompt) -> Result<ChunkStream, BackendError> {
        let entry = self.entries.lock().expect("script lock").pop_front();
        match entry {
            None => Err(BackendError::new(FailureKind::Exhausted, "no scripted completions left")),
            Some(ScriptEntry::Fail(kind)) => Err(BackendError::new(kind, "scripted failure")),
            Some(ScriptEntry::Reply(text)) => Ok(Box::new(chunked(text, self.chunk_chars, self.chunk_delay))),
        }
    }
}

fn chunked(text: String, chunk_chars: usize, delay: Duration) -> impl Iterator<Item = Result<TokenChunk, BackendError>> {
    let chars: Vec<char> = text.chars().collect();
    let pieces: Vec<String> = if chars.is_empty() {
        vec![String::new()]
    } else {
        chars.chunks(chunk_chars).map(|c| c.iter().collect()).collect()
    };
    let last = pieces.len() - 1;
    pieces.into_iter().enumerate().map(move |(i, text)| {
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
        Ok(TokenChunk { text, is_final: i == last })
    })
}

/// Replies with the last line of the conversation history, label removed,
/// or a fixed greeting when there is no history yet.
#[derive(Debug, Default, Clone, Copy)]
pub struct EchoBackend;

impl EchoBackend {
    pub fn reply_for(prompt: &RenderedPrompt) -> String {
        let mut lines = prompt.text.lines().rev();
        lines.next(); // speaker cue
        match lines.next() {
            Some(line) if line.trim() != crate::prompt::SHOT_DELIMITER => {
                for label in [CUSTOMER_LABEL, SYSTEM_LABEL] {
                    if let Some(rest) = line.strip_prefix(label).and_then(|r| r.strip_prefix(':')) {
                        return rest.trim().to_owned();
                    }
                }
                line.trim().to_owned()
            }
            _ => ECHO_GREETING.to_owned(),
        }
    }
}

pub const ECHO_GREETING: &str = "いらっしゃいませ。";

impl Backend for EchoBackend {
    fn open(&self, prompt: &RenderedPrompt) -> Result<ChunkStream, BackendError> {
        Ok(Box::new(chunked(Self::reply_for(prompt), 4, Duration::ZERO)))
    }
}

/// Connection settings for an OpenAI-style chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model_id: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(with = "secs", default = "default_timeout")]
    pub timeout: Duration,
}

fn default_timeout() -> Duration {
    Duration::from_secs(30)
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs(u64::deserialize(d)?))
    }
}

/// Streams from a remote chat-completion endpoint over server-sent events.
pub struct RemoteBackend {
    config: RemoteConfig,
    // Built on first use: the blocking client must not be created on an
    // async runtime thread.
    client: OnceLock<reqwest::blocking::Client>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        Self { config, client: OnceLock::new() }
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, BackendError> {
        if let Some(client) = self.client.get() {
            return Ok(client);
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(self.config.timeout)
            .build()
            .map_err(|e| BackendError::new(FailureKind::Unavailable, e.to_string()))?;
        Ok(self.client.get_or_init(|| client))
    }
}

fn classify(err: &reqwest::Error) -> FailureKind {
    if err.is_timeout() {
        FailureKind::Timeout
    } else if err.is_decode() || err.is_body() {
        FailureKind::Malformed
    } else {
        FailureKind::Unavailable
    }
}

impl Backend for RemoteBackend {
    fn open(&self, prompt: &RenderedPrompt) -> Result<ChunkStream, BackendError> {
        let body = serde_json::json!({
            "model": self.config.model_id,
            "stream": true,
            "messages": [{ "role": "user", "content": prompt.text }],
        });
        let mut request = self.client()?.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| BackendError::new(classify(&e), e.to_string()))?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::new(FailureKind::Unavailable, format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::new(FailureKind::Malformed, format!("HTTP {status}")));
        }
        Ok(Box::new(SseChunks { lines: BufReader::new(response).lines(), done: false }))
    }
}

/// Decodes `data:` lines of a chat-completion event stream.
pub struct SseChunks<R: BufRead> {
    lines: std::io::Lines<R>,
    done: bool,
}

impl<R: BufRead> SseChunks<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), done: false }
    }
}

impl<R: BufRead> Iterator for SseChunks<R> {
    type Item = Result<TokenChunk, BackendError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            let line = match self.lines.next() {
                None => {
                    self.done = true;
                    return Some(Err(BackendError::new(FailureKind::Malformed, "stream ended without [DONE]")));
                }
                Some(Err(e)) => {
                    self.done = true;
                    let kind =
                        if e.kind() == std::io::ErrorKind::TimedOut { FailureKind::Timeout } else { FailureKind::Unavailable };
                    return Some(Err(BackendError::new(kind, e.to_string())));
                }
                Some(Ok(line)) => line,
            };
            let Some(data) = line.strip_prefix("data:") else { continue };
            let data = data.trim();
            if data == "[DONE]" {
                self.done = true;
                return Some(Ok(TokenChunk::new("", true)));
            }
            let value: serde_json::Value = match serde_json::from_str(data) {
                Ok(v) => v,
                Err(e) => {
                    self.done = true;
                    return Some(Err(BackendError::new(FailureKind::Malformed, e.to_string())));
                }
            };
            let delta = &value["choices"][0]["delta"]["content"];
            match delta.as_str() {
                Some(text) if !text.is_empty() => return Some(Ok(TokenChunk::new(text, false))),
                _ => continue,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::RenderedPrompt;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn prompt(text: &str) -> RenderedPrompt {
        RenderedPrompt::raw("test", text)
    }

    fn collect(stream: ChunkStream) -> Vec<TokenChunk> {
        stream.map(Result::unwrap).collect()
    }

    #[test]
    fn scripted_replays_in_order() {
        let handle = BackendHandle::scripted(ScriptedBackend::from_replies(["こんにちは。[END]", "次"]));
        let mut tape = Vec::new();
        let chunks = collect(handle.complete_streaming(&prompt("p"), &mut tape).unwrap());
        let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(joined, "こんにちは。[END]");
        assert_eq!(chunks.iter().filter(|c| c.is_final).count(), 1);
        assert!(chunks.last().unwrap().is_final);
        assert_eq!(handle.complete(&prompt("p"), &mut tape).unwrap(), "次");
    }

    #[test]
    fn empty_prompt_rejected() {
        let handle = BackendHandle::echo();
        assert_eq!(handle.complete(&prompt("  "), &mut Vec::new()), Err(GatewayError::EmptyPrompt));
    }

    #[test]
    fn echo_returns_last_history_line() {
        let p = prompt("persona\n===\nShoko: いらっしゃいませ。\nCustomer: 紅葉が見たいです\nShoko:");
        assert_eq!(BackendHandle::echo().complete(&p, &mut Vec::new()).unwrap(), "紅葉が見たいです");
        let empty = prompt("persona\n===\nShoko:");
        assert_eq!(EchoBackend::reply_for(&empty), ECHO_GREETING);
    }

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    impl Backend for Flaky {
        fn open(&self, _: &RenderedPrompt) -> Result<ChunkStream, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(BackendError::new(FailureKind::Unavailable, "down"))
            } else {
                Ok(Box::new(chunked("ok".into(), 4, Duration::ZERO)))
            }
        }
    }

    #[test]
    fn retries_never_exceed_max() {
        for max_retries in 0..4 {
            for failures in 0..6 {
                let flaky = Arc::new(Flaky { failures, calls: AtomicU32::new(0) });
                let handle = BackendHandle::new(BackendKind::Remote, "m", flaky.clone()).with_max_retries(max_retries);
                let mut tape = Vec::new();
                let result = handle.complete(&prompt("p"), &mut tape);
                let calls = flaky.calls.load(Ordering::SeqCst);
                assert!(calls <= max_retries + 1);
                if failures <= max_retries {
                    assert_eq!(result.unwrap(), "ok");
                    assert_eq!(calls, failures + 1);
                } else {
                    assert_eq!(result.unwrap_err(), GatewayError::Backend {
                        source: BackendError::new(FailureKind::Unavailable, "down"),
                        attempts: max_retries + 1,
                    });
                }
                assert_eq!(tape.iter().filter(|o| matches!(o, CallOutcome::Failed(_))).count() as u32, failures.min(max_retries + 1));
            }
        }
    }

    #[test]
    fn exhausted_script_is_not_retried() {
        let handle = BackendHandle::scripted(ScriptedBackend::from_replies(Vec::<String>::new())).with_max_retries(3);
        let err = handle.complete(&prompt("p"), &mut Vec::new()).unwrap_err();
        assert_eq!(err.kind(), Some(FailureKind::Exhausted));
        assert!(matches!(err, GatewayError::Backend { attempts: 1, .. }));
    }

    #[test]
    fn remote_network_down_after_two_attempts() {
        // Bind then drop to get a port nobody listens on.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let config = RemoteConfig {
            endpoint: format!("http://127.0.0.1:{port}/v1/chat/completions"),
            model_id: "gpt-4-32k-0613".into(),
            api_key: None,
            timeout: Duration::from_secs(2),
        };
        let handle = BackendHandle::remote(config, 1);
        let mut tape = Vec::new();
        let err = handle.complete(&prompt("p"), &mut tape).unwrap_err();
        assert!(matches!(err, GatewayError::Backend { attempts: 2, .. }), "{err:?}");
        assert_eq!(err.kind(), Some(FailureKind::Unavailable));
        assert_eq!(tape, vec![CallOutcome::Failed(FailureKind::Unavailable); 2]);
    }

    /// Serves one canned HTTP response per connection and captures requests.
    fn serve_canned(responses: Vec<String>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let join = std::thread::spawn(move || {
            let mut requests = Vec::new();
            for response in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = vec![0u8; 65536];
                let mut request = Vec::new();
                loop {
                    let n = stream.read(&mut buf).unwrap();
                    request.extend_from_slice(&buf[..n]);
                    let text = String::from_utf8_lossy(&request).to_string();
                    if let Some(head_end) = text.find("\r\n\r\n") {
                        let len = text[..head_end]
                            .lines()
                            .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                            .unwrap_or(0);
                        if request.len() >= head_end + 4 + len {
                            break;
                        }
                    }
                    if n == 0 {
                        break;
                    }
                }
                requests.push(String::from_utf8_lossy(&request).to_string());
                stream.write_all(response.as_bytes()).unwrap();
            }
            requests
        });
        (format!("http://{addr}/v1/chat/completions"), join)
    }

    fn sse_response(deltas: &[&str]) -> String {
        let mut body = String::new();
        for d in deltas {
            let event = serde_json::json!({ "choices": [{ "delta": { "content": d } }] });
            body.push_str(&format!("data: {event}\n\n"));
        }
        body.push_str("data: [DONE]\n\n");
        format!(
            "HTTP/1.1 200 OK\r\nContent-Type: text/event-stream\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
    }

    #[test]
    fn remote_streams_sse_deltas() {
        let (endpoint, join) = serve_canned(vec![
            "HTTP/1.1 503 Service Unavailable\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".into(),
            sse_response(&["こん", "にちは。", "[EN", "D]"]),
        ]);
        let config = RemoteConfig { endpoint, model_id: "gpt-4-32k-0613".into(), api_key: Some("k".into()), timeout: Duration::from_secs(5) };
        let handle = BackendHandle::remote(config, 1);
        let mut tape = Vec::new();
        let mut spoken = Vec::new();
        let completion = stream_speech(&handle, &prompt("Shoko:"), &PunctuationSet::default(), &mut tape, &mut |s| {
            spoken.push(s.text.clone())
        })
        .unwrap();
        assert_eq!(completion.raw, "こんにちは。[END]");
        assert_eq!(spoken, ["こんにちは。"]);
        assert_eq!(tape, [CallOutcome::Failed(FailureKind::Unavailable), CallOutcome::Completed("こんにちは。[END]".into())]);
        let requests = join.join().unwrap();
        assert!(requests[1].contains("\"stream\":true"));
        assert!(requests[1].to_ascii_lowercase().contains("authorization: bearer k"));
        assert!(requests[1].contains("gpt-4-32k-0613"));
    }

    #[test]
    fn sse_without_done_is_malformed() {
        let body = "data: {\"choices\":[{\"delta\":{\"content\":\"a\"}}]}\n\n";
        let chunks: Vec<_> = SseChunks::new(body.as_bytes()).collect();
        assert_eq!(chunks[0], Ok(TokenChunk::new("a", false)));
        assert_eq!(chunks[1].as_ref().unwrap_err().kind, FailureKind::Malformed);
        let garbage: Vec<_> = SseChunks::new("data: {nope\n".as_bytes()).collect();
        assert_eq!(garbage[0].as_ref().unwrap_err().kind, FailureKind::Malformed);
    }

    #[test]
    fn speech_never_contains_split_sign() {
        let handle = BackendHandle::scripted(ScriptedBackend::from_replies(["はい、わかりました。[END]"]).with_chunk_chars(2));
        let mut tape = Vec::new();
        let completion = stream_speech(&handle, &prompt("p"), &PunctuationSet::default(), &mut tape, &mut |_| {}).unwrap();
        let texts: Vec<_> = completion.segments.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["はい、", "わかりました。"]);
        assert!(completion.segments.last().unwrap().terminal);
        assert_eq!(completion.raw, "はい、わかりました。[END]");
    }

    #[test]
    fn script_file_format() {
        let script = ScriptedBackend::parse("一行目\\n二行目\n\n@timeout\n\\@literal\n").unwrap();
        let entries: Vec<_> = script.entries.lock().unwrap().iter().cloned().collect();
        assert_eq!(entries, [
            ScriptEntry::Reply("一行目\n二行目".into()),
            ScriptEntry::Fail(FailureKind::Timeout),
            ScriptEntry::Reply("@literal".into()),
        ]);
        assert!(matches!(ScriptedBackend::parse("@explode"), Err(ScriptError::UnknownDirective { line: 1, .. })));
        assert_eq!(unescape(&escape("a\\n\nb")), "a\\n\nb");
        assert_eq!(unescape(&escape("@x")), "@x");
    }
}
