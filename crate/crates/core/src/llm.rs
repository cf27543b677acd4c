//! Chat-completion and embedding client with retries and an in-flight bound.
//!
//! Requests follow the common `/chat/completions` and `/embeddings` JSON
//! conventions with bearer authentication. The API key is read from the
//! configured environment variable at request time and never logged.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::embed::TextEmbedder;
use crate::error::{LlmError, TransportError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub base_url: String,
    pub api_key_env: String,
    pub chat_model: String,
    pub embed_model: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub embed_batch_size: usize,
    /// First backoff delay; doubles per retry.
    pub backoff_base_ms: u64,
    pub jitter_seed: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".to_owned(),
            api_key_env: "OPENAI_API_KEY".to_owned(),
            chat_model: "gpt-4o-mini".to_owned(),
            embed_model: "text-embedding-3-small".to_owned(),
            timeout_secs: 60.0,
            max_retries: 3,
            max_in_flight: 8,
            embed_batch_size: 64,
            backoff_base_ms: 1000,
            jitter_seed: 0,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_in_flight == 0 {
            return Err(LlmError::Protocol(
                "max_in_flight must be at least 1".into(),
            ));
        }
        if self.embed_batch_size == 0 {
            return Err(LlmError::Protocol(
                "embed_batch_size must be at least 1".into(),
            ));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(LlmError::Protocol("timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Chat,
    Embeddings,
}

impl Endpoint {
    pub fn path(self) -> &'static str {
        match self {
            Endpoint::Chat => "chat/completions",
            Endpoint::Embeddings => "embeddings",
        }
    }
}

/// One JSON request/response exchange.
pub trait Transport: Send + Sync {
    fn post(
        &self,
        endpoint: Endpoint,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key_env: String,
}

impl HttpTransport {
    pub fn new(config: &ServiceConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| LlmError::Protocol(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            client,
            base_url: config.base_url.trim_end_matches('/').to_owned(),
            api_key_env: config.api_key_env.clone(),
        })
    }
}

impl Transport for HttpTransport {
    fn post(
        &self,
        endpoint: Endpoint,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError> {
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| TransportError::MissingKey(self.api_key_env.clone()))?;
        let url = format!("{}/{}", self.base_url, endpoint.path());
        let response = self
            .client
            .post(url)
            .bearer_auth(key)
            .timeout(timeout)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Network(e.without_url().to_string())
                }
            })?;
        let status = response.status().as_u16();
        match status {
            200..=299 => response
                .json()
                .map_err(|e| TransportError::Malformed(e.to_string())),
            429 => Err(TransportError::RateLimited),
            408 => Err(TransportError::Timeout),
            500..=599 => Err(TransportError::Server(status)),
            _ => Err(TransportError::Client {
                status,
                body: response.text().unwrap_or_default(),
            }),
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(limit: usize) -> Self {
        Self {
            limit,
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut active = self.active.lock().expect("gate lock poisoned");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("gate lock poisoned");
        }
        *active += 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.active.lock().expect("gate lock poisoned") -= 1;
        self.gate.freed.notify_one();
    }
}

pub struct LlmClient {
    config: ServiceConfig,
    transport: Arc<dyn Transport>,
    gate: Gate,
    jitter: Mutex<ChaCha8Rng>,
}

impl LlmClient {
    pub fn new(config: ServiceConfig) -> Result<Self, LlmError> {
        let transport = Arc::new(HttpTransport::new(&config)?);
        Self::with_transport(config, transport)
    }

    pub fn with_transport(
        config: ServiceConfig,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, LlmError> {
        config.validate()?;
        Ok(Self {
            gate: Gate::new(config.max_in_flight),
            jitter: Mutex::new(ChaCha8Rng::seed_from_u64(config.jitter_seed)),
            transport,
            config,
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Delay before retry number `retry` (0-based): `base * 2^retry`, scaled by a
    /// jitter factor drawn from [0.5, 1).
    fn backoff(&self, retry: u32) -> Duration {
        let full = self
            .config
            .backoff_base_ms
            .saturating_mul(1u64 << retry.min(20));
        let factor: f64 = self
            .jitter
            .lock()
            .expect("jitter lock poisoned")
            .random_range(0.5..1.0);
        Duration::from_millis((full as f64 * factor) as u64)
    }

    fn request(&self, endpoint: Endpoint, body: &Value) -> Result<Value, LlmError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let result = {
                let _slot = self.gate.enter();
                self.transport.post(endpoint, body, self.config.timeout())
            };
            match result {
                Ok(value) => return Ok(value),
                Err(e) if e.is_transient() && attempts <= self.config.max_retries => {
                    let delay = self.backoff(attempts - 1);
                    log::debug!(
                        "{} request failed ({e}); retrying in {delay:?}",
                        endpoint.path()
                    );
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
                Err(source) => return Err(LlmError::Transport { attempts, source }),
            }
        }
    }

    pub fn chat_complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::EmptyInput);
        }
        if messages
            .iter()
            .any(|m| m.role == Role::User && m.content.is_empty())
        {
            return Err(LlmError::Protocol("user message content is empty".into()));
        }
        let body = json!({
            "model": self.config.chat_model,
            "messages": messages,
            "temperature": 0,
        });
        let reply = self.request(Endpoint::Chat, &body)?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| LlmError::Protocol("reply has no choices[0].message.content".into()))
    }

    /// Embeds texts in batches of `embed_batch_size`, preserving order.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        if texts.is_empty() {
            return Err(LlmError::EmptyInput);
        }
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.config.embed_batch_size) {
            let body = json!({ "model": self.config.embed_model, "input": batch });
            let reply = self.request(Endpoint::Embeddings, &body)?;
            out.extend(parse_embeddings(&reply, batch.len())?);
        }
        let dim = out[0].len();
        if let Some(bad) = out.iter().position(|v| v.len() != dim) {
            return Err(LlmError::Protocol(format!(
                "embedding {bad} has dimension {}, expected {dim}",
                out[bad].len()
            )));
        }
        Ok(out)
    }
}

fn parse_embeddings(reply: &Value, expected: usize) -> Result<Vec<Vec<f64>>, LlmError> {
    let data = reply["data"]
        .as_array()
        .ok_or_else(|| LlmError::Protocol("reply has no data array".into()))?;
    if data.len() != expected {
        return Err(LlmError::Protocol(format!(
            "asked for {expected} embeddings, got {}",
            data.len()
        )));
    }
    let mut indexed = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let index = item["index"].as_u64().map_or(pos, |i| i as usize);
        let vector = item["embedding"]
            .as_array()
            .ok_or_else(|| LlmError::Protocol(format!("data[{pos}] has no embedding")))?
            .iter()
            .map(|x| {
                x.as_f64().ok_or_else(|| {
                    LlmError::Protocol(format!("data[{pos}] has a non-numeric entry"))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        indexed.push((index, vector));
    }
    indexed.sort_by_key(|(i, _)| *i);
    Ok(indexed.into_iter().map(|(_, v)| v).collect())
}

impl TextEmbedder for LlmClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        self.embed_texts(texts)
    }
}

/// Runs `f` over `items` on at most `limit` threads; results keep input order.
pub fn fan_out<T: Sync, R: Send>(items: &[T], limit: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = limit.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let cursor = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result lock poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock poisoned")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

/// Offline transports for tests and examples.
pub mod mock {
    use super::*;

    /// Replies from a fixed script, one entry per call; the last entry repeats.
    pub struct ScriptedTransport {
        script: Vec<Result<Value, TransportError>>,
        calls: AtomicUsize,
    }

    impl ScriptedTransport {
        pub fn new(script: Vec<Result<Value, TransportError>>) -> Self {
            assert!(!script.is_empty(), "script needs at least one reply");
            Self {
                script,
                calls: AtomicUsize::new(0),
            }
        }

        /// Chat replies carrying the given assistant texts.
        pub fn chat(replies: &[&str]) -> Self {
            Self::new(replies.iter().map(|r| Ok(chat_reply(r))).collect())
        }

        pub fn calls(&self) -> usize {
            self.calls.load(Ordering::SeqCst)
        }
    }

    impl Transport for ScriptedTransport {
        fn post(&self, _: Endpoint, _: &Value, _: Duration) -> Result<Value, TransportError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            self.script[n.min(self.script.len() - 1)].clone()
        }
    }

    /// Transport backed by a closure over the request body.
    pub struct FnTransport<F>(pub F);

    impl<F> Transport for FnTransport<F>
    where
        F: Fn(Endpoint, &Value) -> Result<Value, TransportError> + Send + Sync,
    {
        fn post(
            &self,
            endpoint: Endpoint,
            body: &Value,
            _: Duration,
        ) -> Result<Value, TransportError> {
            (self.0)(endpoint, body)
        }
    }

    pub fn chat_reply(text: &str) -> Value {
        json!({ "choices": [{ "message": { "role": "assistant", "content": text } }] })
    }

    pub fn embedding_reply(vectors: &[Vec<f64>]) -> Value {
        let data: Vec<Value> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| json!({ "index": i, "embedding": v }))
            .collect();
        json!({ "data": data })
    }

    /// Config with zero backoff, for tests.
    pub fn fast_config() -> ServiceConfig {
        ServiceConfig {
            backoff_base_ms: 0,
            ..ServiceConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::mock::*;
    use super::*;
    use std::sync::atomic::AtomicUsize;

    fn client(
        transport: impl Transport + 'static,
        config: ServiceConfig,
    ) -> (LlmClient, Arc<dyn Transport>) {
        let t: Arc<dyn Transport> = Arc::new(transport);
        (LlmClient::with_transport(config, t.clone()).unwrap(), t)
    }

    #[test]
    fn canned_reply() {
        let (c, _) = client(ScriptedTransport::chat(&["OK"]), fast_config());
        assert_eq!(c.chat_complete(&[ChatMessage::user("hi")]).unwrap(), "OK");
    }

    #[test]
    fn retries_then_succeeds() {
        let t = Arc::new(ScriptedTransport::new(vec![
            Err(TransportError::Server(503)),
            Err(TransportError::Timeout),
            Ok(chat_reply("done")),
        ]));
        let c = LlmClient::with_transport(
            ServiceConfig {
                max_retries: 3,
                ..fast_config()
            },
            t.clone(),
        )
        .unwrap();
        assert_eq!(c.chat_complete(&[ChatMessage::user("hi")]).unwrap(), "done");
        assert_eq!(t.calls(), 3);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let t = Arc::new(ScriptedTransport::new(vec![Err(
            TransportError::RateLimited,
        )]));
        let c = LlmClient::with_transport(
            ServiceConfig {
                max_retries: 2,
                ..fast_config()
            },
            t.clone(),
        )
        .unwrap();
        match c.chat_complete(&[ChatMessage::user("hi")]) {
            Err(LlmError::Transport { attempts, source }) => {
                assert_eq!(attempts, 3);
                assert_eq!(source, TransportError::RateLimited);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(t.calls(), 3);
    }

    #[test]
    fn non_transient_errors_are_not_retried() {
        let t = Arc::new(ScriptedTransport::new(vec![Err(TransportError::Client {
            status: 400,
            body: "bad".into(),
        })]));
        let c = LlmClient::with_transport(fast_config(), t.clone()).unwrap();
        assert!(matches!(
            c.chat_complete(&[ChatMessage::user("hi")]),
            Err(LlmError::Transport { attempts: 1, .. })
        ));
        assert_eq!(t.calls(), 1);
    }

    #[test]
    fn empty_user_message_rejected() {
        let (c, _) = client(ScriptedTransport::chat(&["OK"]), fast_config());
        assert!(c.chat_complete(&[ChatMessage::user("")]).is_err());
        assert!(c.chat_complete(&[]).is_err());
    }

    #[test]
    fn backoff_doubles_with_bounded_jitter() {
        let (c, _) = client(ScriptedTransport::chat(&["OK"]), ServiceConfig::default());
        for retry in 0..4 {
            let full = 1000u64 << retry;
            let d = c.backoff(retry).as_millis() as u64;
            assert!(d >= full / 2 && d < full, "retry {retry}: {d}");
        }
        let (a, _) = client(ScriptedTransport::chat(&["OK"]), ServiceConfig::default());
        let (b, _) = client(ScriptedTransport::chat(&["OK"]), ServiceConfig::default());
        assert_eq!(a.backoff(2), b.backoff(2));
    }

    fn length_embedder(
    ) -> FnTransport<impl Fn(Endpoint, &Value) -> Result<Value, TransportError> + Send + Sync> {
        FnTransport(|_: Endpoint, body: &Value| {
            let vectors: Vec<Vec<f64>> = body["input"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| vec![t.as_str().unwrap().len() as f64, 0.0, 0.0])
                .collect();
            Ok(embedding_reply(&vectors))
        })
    }

    #[test]
    fn embeddings_preserve_order() {
        let (c, _) = client(length_embedder(), fast_config());
        let texts: Vec<String> = ["a", "abc", "ab"].iter().map(|s| s.to_string()).collect();
        let v = c.embed_texts(&texts).unwrap();
        assert_eq!(
            v,
            vec![
                vec![1.0, 0.0, 0.0],
                vec![3.0, 0.0, 0.0],
                vec![2.0, 0.0, 0.0]
            ]
        );
        assert!(matches!(c.embed_texts(&[]), Err(LlmError::EmptyInput)));
    }

    #[test]
    fn embeddings_are_batched() {
        let requests = Arc::new(AtomicUsize::new(0));
        let counter = requests.clone();
        let inner = length_embedder();
        let t = FnTransport(move |e: Endpoint, body: &Value| {
            counter.fetch_add(1, Ordering::SeqCst);
            inner.post(e, body, Duration::ZERO)
        });
        let (c, _) = client(t, fast_config());
        let texts: Vec<String> = (0..130).map(|i| format!("text {i}")).collect();
        assert_eq!(c.embed_texts(&texts).unwrap().len(), 130);
        assert_eq!(requests.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn inconsistent_dimensions_are_protocol_errors() {
        let t =
            FnTransport(|_: Endpoint, _: &Value| Ok(embedding_reply(&[vec![1.0], vec![1.0, 2.0]])));
        let (c, _) = client(t, fast_config());
        let texts = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(c.embed_texts(&texts), Err(LlmError::Protocol(_))));
    }

    #[test]
    fn in_flight_bound_holds() {
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (a, p) = (active.clone(), peak.clone());
        let t = FnTransport(move |_: Endpoint, _: &Value| {
            let now = a.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            a.fetch_sub(1, Ordering::SeqCst);
            Ok(chat_reply("ok"))
        });
        let (c, _) = client(
            t,
            ServiceConfig {
                max_in_flight: 3,
                ..fast_config()
            },
        );
        let items: Vec<usize> = (0..40).collect();
        let replies = fan_out(&items, 16, |_| {
            c.chat_complete(&[ChatMessage::user("x")]).unwrap()
        });
        assert_eq!(replies.len(), 40);
        assert!(peak.load(Ordering::SeqCst) <= 3);
        assert!(peak.load(Ordering::SeqCst) >= 2);
    }

    #[test]
    fn fan_out_keeps_order() {
        let items: Vec<u32> = (0..100).collect();
        assert_eq!(
            fan_out(&items, 7, |x| x * 2),
            items.iter().map(|x| x * 2).collect::<Vec<_>>()
        );
        assert!(fan_out(&Vec::<u32>::new(), 4, |x| *x).is_empty());
    }

    #[test]
    fn missing_key_is_reported_by_name() {
        let config = ServiceConfig {
            api_key_env: "KG_DENOISE_TEST_UNSET_KEY".into(),
            ..fast_config()
        };
        let c = LlmClient::new(config).unwrap();
        match c.chat_complete(&[ChatMessage::user("hi")]) {
            Err(LlmError::Transport {
                source: TransportError::MissingKey(name),
                ..
            }) => {
                assert_eq!(name, "KG_DENOISE_TEST_UNSET_KEY")
            }
            other => panic!("{other:?}"),
        }
    }
}
