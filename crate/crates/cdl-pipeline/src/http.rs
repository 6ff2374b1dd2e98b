//! HTTP chat-completion transport.
//!
//! Speaks the common `POST {base_url}` chat shape: a JSON body with `model`,
//! `max_tokens`, `temperature`, and a `messages` array of system/user turns.
//! The API key is read from the environment variable named in the provider
//! config at send time and is never logged or persisted.

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::gateway::{
    estimate_tokens, ChatRequest, ChatResponse, GatewayError, ProviderConfig, Transport,
};

pub struct HttpTransport {
    /// Name of the HTTP header carrying the key, e.g. `Authorization` or
    /// `x-api-key`.
    pub auth_header: String,
    /// Prefix prepended to the key value, e.g. `Bearer `.
    pub auth_prefix: String,
}

impl Default for HttpTransport {
    fn default() -> Self {
        HttpTransport {
            auth_header: "Authorization".to_string(),
            auth_prefix: "Bearer ".to_string(),
        }
    }
}

fn extract_text(body: &Value) -> Option<String> {
    // OpenAI-style: choices[0].message.content
    if let Some(text) = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
    {
        return Some(text.to_string());
    }
    // Anthropic-style: content[0].text
    if let Some(text) = body.pointer("/content/0/text").and_then(Value::as_str) {
        return Some(text.to_string());
    }
    None
}

fn extract_usage(body: &Value) -> Option<(u64, u64)> {
    let usage = body.get("usage")?;
    let prompt = usage
        .get("prompt_tokens")
        .or_else(|| usage.get("input_tokens"))?
        .as_u64()?;
    let completion = usage
        .get("completion_tokens")
        .or_else(|| usage.get("output_tokens"))?
        .as_u64()?;
    Some((prompt, completion))
}

impl Transport for HttpTransport {
    fn send(
        &self,
        request: &ChatRequest,
        config: &ProviderConfig,
    ) -> Result<ChatResponse, GatewayError> {
        let key = std::env::var(&config.auth_env_var)
            .map_err(|_| GatewayError::MissingAuth(config.auth_env_var.clone()))?;
        let body = json!({
            "model": request.model_id,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
        });
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| GatewayError::Provider {
                status: 0,
                body: e.to_string(),
            })?;
        let started = Instant::now();
        let response = client
            .post(&config.base_url)
            .header(&self.auth_header, format!("{}{key}", self.auth_prefix))
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    GatewayError::Timeout(config.timeout_s)
                } else {
                    GatewayError::Provider {
                        status: 0,
                        body: e.to_string(),
                    }
                }
            })?;
        let latency_s = started.elapsed().as_secs_f64();
        let status = response.status().as_u16();
        let text = response.text().unwrap_or_default();
        if !(200..300).contains(&status) {
            let excerpt: String = text.chars().take(400).collect();
            return Err(GatewayError::Provider {
                status,
                body: excerpt,
            });
        }
        let parsed: Value = serde_json::from_str(&text).map_err(|e| GatewayError::Provider {
            status,
            body: format!("unparseable response body: {e}"),
        })?;
        let reply = extract_text(&parsed).ok_or_else(|| GatewayError::Provider {
            status,
            body: "response body carries no message text".to_string(),
        })?;
        let (prompt_tokens, completion_tokens, tokens_estimated) = match extract_usage(&parsed) {
            Some((p, c)) => (p, c, false),
            None => (
                estimate_tokens(&request.user_text) + estimate_tokens(&request.system_text),
                estimate_tokens(&reply),
                true,
            ),
        };
        Ok(ChatResponse {
            model_id: request.model_id.clone(),
            text: reply,
            prompt_tokens,
            completion_tokens,
            latency_s,
            provider: config.provider.clone(),
            from_replay: false,
            tokens_estimated,
        })
    }
}
