//! OpenAI-compatible chat-completions and embeddings backend.

use std::time::Duration;

use serde_json::json;

use super::{GatewayConfig, GatewayError, GatewayRequest, ModelBackend};

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    embed_model: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::Config("no endpoint configured and mock mode is off".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: config.model.clone(),
            embed_model: config.embed_model.clone().unwrap_or_else(|| config.model.clone()),
            api_key: std::env::var(&config.api_key_env).ok(),
        })
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value, GatewayError> {
        let mut req = self.client.post(format!("{}/{path}", self.endpoint)).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if status.is_server_error() {
            return Err(GatewayError::Transport(format!("HTTP {}: {text}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(GatewayError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| GatewayError::Transport(format!("malformed endpoint response: {e}")))
    }
}

impl ModelBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &GatewayRequest) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.task.prompt_template()},
                {"role": "user", "content": request.input.to_string()},
            ],
            "response_format": {"type": "json_object"},
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_output,
        });
        let v = self.post("chat/completions", &body)?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Transport("response has no message content".into()))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        let v = self.post("embeddings", &json!({"model": self.embed_model, "input": texts}))?;
        let data = v["data"]
            .as_array()
            .ok_or_else(|| GatewayError::Transport("embedding response has no data".into()))?;
        data.iter()
            .map(|d| {
                d["embedding"]
                    .as_array()
                    .ok_or_else(|| GatewayError::Transport("embedding entry has no vector".into()))?
                    .iter()
                    .map(|x| {
                        x.as_f64()
                            .map(|f| f as f32)
                            .ok_or_else(|| GatewayError::Transport("non-numeric embedding".into()))
                    })
                    .collect()
            })
            .collect()
    }
}
