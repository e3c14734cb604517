use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{DiskCache, Embedding, LanguageModel, LmError, Sample, SampleRequest};

/// Connection settings for an OpenAI-compatible inference server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Server root, e.g. `http://localhost:8000`. `/v1/...` is appended.
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub planning_model: String,
    pub translation_model: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub max_tokens: u32,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into(),
            api_key: None,
            planning_model: "gpt2-large".into(),
            translation_model: "stsb-roberta-large".into(),
            timeout_secs: 60,
            retries: 3,
            max_tokens: 32,
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    cache: Option<DiskCache>,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("base_url", &self.config.base_url)
            .field("cache", &self.cache)
            .finish()
    }
}

enum Failure {
    Retryable(LmError),
    Fatal(LmError),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig, cache: Option<DiskCache>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend { config, agent, cache }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/v1/{path}", self.config.base_url.trim_end_matches('/'))
    }

    fn post_once(&self, path: &str, body: &Value) -> Result<Value, Failure> {
        let mut request = self.agent.post(&self.url(path));
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| Failure::Retryable(LmError::Unreachable(e.to_string())))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(LmError::Unreachable(e.to_string())))?;
        if status >= 500 || status == 429 {
            return Err(Failure::Retryable(LmError::Unreachable(format!("HTTP {status}: {text}"))));
        }
        if status >= 400 {
            return Err(Failure::Fatal(LmError::Malformed(format!("HTTP {status}: {text}"))));
        }
        serde_json::from_str(&text).map_err(|e| Failure::Retryable(LmError::Malformed(e.to_string())))
    }

    /// POST with caching and retries; `parse` validates the response so a
    /// malformed body is retried rather than cached.
    fn call<T>(&self, path: &str, body: Value, parse: impl Fn(&Value) -> Result<T, LmError>) -> Result<T, LmError> {
        let key = DiskCache::key(&self.id(), &json!({"path": path, "body": body}));
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get::<Value>(&key) {
                if let Ok(v) = parse(&hit) {
                    return Ok(v);
                }
            }
        }
        let mut last = LmError::Unreachable("no attempt made".into());
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                log::warn!("retrying {path} (attempt {}): {last}", attempt + 1);
                std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
            }
            match self.post_once(path, &body) {
                Ok(raw) => match parse(&raw) {
                    Ok(v) => {
                        if let Some(cache) = &self.cache {
                            cache.put(&key, &raw)?;
                        }
                        return Ok(v);
                    }
                    Err(e) => last = e,
                },
                Err(Failure::Retryable(e)) => last = e,
                Err(Failure::Fatal(e)) => return Err(e),
            }
        }
        Err(last)
    }
}

fn mean_logprob(logprobs: &Value, from_offset: Option<usize>) -> Result<(f64, usize), LmError> {
    let values = logprobs
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| LmError::Malformed("missing token_logprobs".into()))?;
    let offsets = logprobs.get("text_offset").and_then(Value::as_array);
    let mut sum = 0.0;
    let mut n = 0;
    for (i, v) in values.iter().enumerate() {
        if let Some(start) = from_offset {
            let off = offsets
                .and_then(|o| o.get(i))
                .and_then(Value::as_u64)
                .ok_or_else(|| LmError::Malformed("missing text_offset".into()))?;
            if (off as usize) < start {
                continue;
            }
        }
        if let Some(lp) = v.as_f64() {
            sum += lp;
            n += 1;
        }
    }
    if n == 0 {
        return Ok((0.0, 0));
    }
    Ok((sum / n as f64, n))
}

impl LanguageModel for RemoteBackend {
    fn id(&self) -> String {
        format!(
            "remote:{}:{}:{}",
            self.config.base_url, self.config.planning_model, self.config.translation_model
        )
    }

    fn sample_continuations(&self, request: &SampleRequest) -> Result<Vec<Sample>, LmError> {
        if request.prompt.trim().is_empty() {
            return Err(LmError::Precondition("empty prompt".into()));
        }
        let body = json!({
            "model": self.config.planning_model,
            "prompt": request.prompt,
            "n": request.k,
            "max_tokens": self.config.max_tokens,
            "temperature": request.temperature,
            "stop": [request.stop],
            "logprobs": 1,
            "seed": request.seed,
        });
        let k = request.k;
        let stop = request.stop.clone();
        self.call("completions", body, move |raw| {
            let choices = raw
                .get("choices")
                .and_then(Value::as_array)
                .ok_or_else(|| LmError::Malformed("missing choices".into()))?;
            if choices.len() != k {
                return Err(LmError::Malformed(format!("expected {k} choices, got {}", choices.len())));
            }
            let mut indexed = Vec::with_capacity(k);
            for (pos, choice) in choices.iter().enumerate() {
                let text = choice
                    .get("text")
                    .and_then(Value::as_str)
                    .ok_or_else(|| LmError::Malformed("choice without text".into()))?;
                let (mean, n) = match choice.get("logprobs") {
                    Some(lp) if !lp.is_null() => mean_logprob(lp, None)?,
                    _ => return Err(LmError::Malformed("choice without logprobs".into())),
                };
                let line = text.split(stop.as_str()).next().unwrap_or("").trim().to_string();
                let index = choice.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
                indexed.push((
                    index,
                    Sample {
                        text: line,
                        mean_logprob: mean.min(0.0),
                        token_count: n,
                    },
                ));
            }
            indexed.sort_by_key(|(i, _)| *i);
            Ok(indexed.into_iter().map(|(_, s)| s).collect())
        })
    }

    fn perplexity(&self, prompt: &str, continuation: &str) -> Result<f64, LmError> {
        if continuation.trim().is_empty() {
            return Err(LmError::Precondition("empty continuation".into()));
        }
        let body = json!({
            "model": self.config.planning_model,
            "prompt": format!("{prompt}{continuation}"),
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
            "temperature": 0.0,
        });
        let start = prompt.len();
        self.call("completions", body, move |raw| {
            let logprobs = raw
                .pointer("/choices/0/logprobs")
                .ok_or_else(|| LmError::Malformed("missing logprobs".into()))?;
            let (mean, n) = mean_logprob(logprobs, Some(start))?;
            if n == 0 {
                return Err(LmError::Malformed("no scored continuation tokens".into()));
            }
            Ok((-mean).exp().max(1.0))
        })
    }

    fn embed(&self, text: &str) -> Result<Embedding, LmError> {
        let body = json!({ "model": self.config.translation_model, "input": text });
        self.call("embeddings", body, |raw| {
            let vector = raw
                .pointer("/data/0/embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| LmError::Malformed("missing data[0].embedding".into()))?
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| LmError::Malformed("non-numeric embedding".into())))
                .collect::<Result<Vec<f64>, _>>()?;
            if vector.is_empty() {
                return Err(LmError::Malformed("empty embedding".into()));
            }
            Ok(Embedding::new(vector))
        })
    }
}
