//! Thin blocking JSON-over-HTTP client shared by the live adapters.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Clone)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    bearer: Option<String>,
    retries: usize,
}

impl JsonClient {
    pub(crate) fn new(bearer: Option<String>, timeout: Duration, retries: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        JsonClient {
            agent,
            bearer,
            retries,
        }
    }

    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, String> {
        self.with_retries(|| {
            let mut req = self.agent.post(url);
            if let Some(token) = &self.bearer {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            req.send_json(body)
                .map_err(|e| e.to_string())?
                .body_mut()
                .read_json::<R>()
                .map_err(|e| e.to_string())
        })
    }

    pub(crate) fn get<R: DeserializeOwned>(&self, url: &str, query: &[(&str, &str)]) -> Result<R, String> {
        self.with_retries(|| {
            let mut req = self.agent.get(url);
            for (k, v) in query {
                req = req.query(*k, *v);
            }
            if let Some(token) = &self.bearer {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            req.call()
                .map_err(|e| e.to_string())?
                .body_mut()
                .read_json::<R>()
                .map_err(|e| e.to_string())
        })
    }

    fn with_retries<R>(&self, mut op: impl FnMut() -> Result<R, String>) -> Result<R, String> {
        let mut last = String::new();
        for attempt in 0..=self.retries {
            match op() {
                Ok(r) => return Ok(r),
                Err(e) => {
                    log::debug!("http attempt {} failed: {e}", attempt + 1);
                    last = e;
                    if attempt < self.retries {
                        std::thread::sleep(Duration::from_millis(200 << attempt));
                    }
                }
            }
        }
        Err(last)
    }
}
