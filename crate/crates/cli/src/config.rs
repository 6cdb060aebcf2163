//! Layered settings: flags over `HAZARDRAG_*` environment variables over a
//! `key = value` file over built-in defaults. Credentials come from the
//! environment only and never enter [`CliConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hazardrag::retrieval::RetrievalConfig;
use hazardrag::vecstore::DEFAULT_DIM;
use hazardrag::{ChunkStrategy, Hazard, PipelineConfig, PipelineVariant};

pub const ENV_PREFIX: &str = "HAZARDRAG_";

/// Invalid invocation or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Every key accepted in a config file, as `HAZARDRAG_<KEY>` or via `--set`.
pub const KEYS: &[&str] = &[
    "index",
    "provider",
    "script",
    "llm_endpoint",
    "llm_model",
    "embedder",
    "embed_endpoint",
    "embed_model",
    "embed_dim",
    "search",
    "search_endpoint",
    "search_fixtures",
    "scorer",
    "variant",
    "strategy",
    "window",
    "overlap",
    "hazard",
    "parallelism",
    "seed",
    "tau",
    "coarse_budget",
    "rerank_k",
    "max_iterations",
    "search_top_n",
];

const SECRET_SUFFIXES: &[&str] = &["api_key", "token", "secret", "password"];

#[derive(Debug, Clone, Default)]
pub struct Layers {
    pub flags: BTreeMap<String, String>,
    pub env: BTreeMap<String, String>,
    pub file: BTreeMap<String, String>,
}

impl Layers {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.flags
            .get(key)
            .or_else(|| self.env.get(key))
            .or_else(|| self.file.get(key))
            .map(String::as_str)
    }

    fn parse<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| usage(format!("invalid value for {key}: {e}"))))
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> anyhow::Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// `HAZARDRAG_<KEY>` for every known key present in `vars`.
    pub fn env_from<I: IntoIterator<Item = (String, String)>>(vars: I) -> BTreeMap<String, String> {
        vars.into_iter()
            .filter_map(|(k, v)| {
                let key = k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
                KEYS.contains(&key.as_str()).then_some((key, v))
            })
            .collect()
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str, origin: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = || format!("{}:{}", origin.display(), n + 1);
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}: expected `key = value`", at())))?;
        let key = k.trim().to_ascii_lowercase();
        if SECRET_SUFFIXES.iter().any(|s| key.ends_with(s)) {
            return Err(usage(format!(
                "{}: credentials are read from the environment only ({ENV_PREFIX}LLM_API_KEY, {ENV_PREFIX}EMBED_API_KEY, {ENV_PREFIX}SEARCH_API_KEY)",
                at()
            )));
        }
        if !KEYS.contains(&key.as_str()) {
            return Err(usage(format!("{}: unknown key `{key}`", at())));
        }
        out.insert(key, v.trim().trim_matches('"').to_string());
    }
    Ok(out)
}

macro_rules! choice {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name {
            $($variant),+
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("'{other}' (expected one of: {})", [$($text),+].join(", "))),
                }
            }
        }
    };
}

choice!(ProviderKind { Http => "http", Script => "script", Desk => "desk" });
choice!(EmbedderKind { Hash => "hash", Http => "http" });
choice!(SearchKind { None => "none", Http => "http", Fixtures => "fixtures" });
choice!(ScorerKind { Lexical => "lexical", Llm => "llm" });

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub index: PathBuf,
    pub provider: ProviderKind,
    pub script: Option<PathBuf>,
    pub llm_endpoint: String,
    pub llm_model: String,
    pub embedder: EmbedderKind,
    pub embed_endpoint: String,
    pub embed_model: String,
    pub embed_dim: usize,
    pub search: SearchKind,
    pub search_endpoint: String,
    pub search_fixtures: Option<PathBuf>,
    pub scorer: ScorerKind,
    pub pipeline: PipelineConfig,
    pub strategy: ChunkStrategy,
    pub window: usize,
    pub overlap: usize,
    pub hazard: Option<Hazard>,
    pub parallelism: usize,
    pub seed: u64,
}

impl CliConfig {
    pub fn resolve(layers: &Layers) -> anyhow::Result<CliConfig> {
        let variant: PipelineVariant = layers.or("variant", PipelineVariant::FullMora)?;
        let defaults = PipelineConfig::for_variant(variant);
        let retrieval = RetrievalConfig {
            tau: layers.or("tau", defaults.retrieval.tau)?,
            coarse_budget: layers.or("coarse_budget", defaults.retrieval.coarse_budget)?,
            rerank_k: layers.or("rerank_k", defaults.retrieval.rerank_k)?,
        };
        let pipeline = PipelineConfig {
            variant,
            max_iterations: layers.or("max_iterations", defaults.max_iterations)?,
            retrieval,
            search_top_n: layers.or("search_top_n", defaults.search_top_n)?,
        };
        pipeline.validate().map_err(usage)?;
        let default_parallelism = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let cfg = CliConfig {
            index: layers.or("index", PathBuf::from("hazardrag.index"))?,
            provider: layers.or("provider", ProviderKind::Http)?,
            script: layers.parse("script")?,
            llm_endpoint: layers.or("llm_endpoint", "https://api.openai.com/v1/chat/completions".to_string())?,
            llm_model: layers.or("llm_model", "gpt-4o".to_string())?,
            embedder: layers.or("embedder", EmbedderKind::Hash)?,
            embed_endpoint: layers.or("embed_endpoint", "https://api.openai.com/v1/embeddings".to_string())?,
            embed_model: layers.or("embed_model", "text-embedding-3-small".to_string())?,
            embed_dim: layers.or("embed_dim", DEFAULT_DIM)?,
            search: layers.or("search", SearchKind::None)?,
            search_endpoint: layers.or("search_endpoint", String::new())?,
            search_fixtures: layers.parse("search_fixtures")?,
            scorer: layers.or("scorer", ScorerKind::Lexical)?,
            pipeline,
            strategy: layers.or("strategy", ChunkStrategy::Paragraph)?,
            window: layers.or("window", hazardrag::corpus::DEFAULT_WINDOW)?,
            overlap: layers.or("overlap", hazardrag::corpus::DEFAULT_OVERLAP)?,
            hazard: layers.parse("hazard")?,
            parallelism: layers.or("parallelism", default_parallelism)?.max(1),
            seed: layers.or("seed", 0)?,
        };
        if cfg.embed_dim == 0 {
            return Err(usage("embed_dim must be positive"));
        }
        if cfg.overlap >= cfg.window {
            return Err(usage("overlap must be smaller than window"));
        }
        Ok(cfg)
    }
}

/// Read from `HAZARDRAG_{LLM,EMBED,SEARCH}_API_KEY`.
#[derive(Clone, Default)]
pub struct Credentials {
    pub llm: Option<String>,
    pub embed: Option<String>,
    pub search: Option<String>,
}

impl Credentials {
    pub fn from_env() -> Self {
        let get = |name: &str| std::env::var(format!("{ENV_PREFIX}{name}")).ok().filter(|v| !v.is_empty());
        Credentials {
            llm: get("LLM_API_KEY"),
            embed: get("EMBED_API_KEY"),
            search: get("SEARCH_API_KEY"),
        }
    }
}

impl fmt::Debug for Credentials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |v: &Option<String>| if v.is_some() { "<set>" } else { "<unset>" };
        f.debug_struct("Credentials")
            .field("llm", &mark(&self.llm))
            .field("embed", &mark(&self.embed))
            .field("search", &mark(&self.search))
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layers(flags: &[(&str, &str)], env: &[(&str, &str)], file: &str) -> Layers {
        let own = |kv: &[(&str, &str)]| kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Layers {
            flags: own(flags),
            env: Layers::env_from(env.iter().map(|(k, v)| (k.to_string(), v.to_string()))),
            file: parse_config_file(file, Path::new("test.conf")).unwrap(),
        }
    }

    #[test]
    fn precedence() {
        let file = "seed = 1\nrerank_k = 3\ntau = 0.3 # comment\n";
        let l = layers(&[("seed", "3")], &[("HAZARDRAG_SEED", "2"), ("HAZARDRAG_RERANK_K", "4")], file);
        let c = CliConfig::resolve(&l).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.pipeline.retrieval.rerank_k, 4);
        assert_eq!(c.pipeline.retrieval.tau, 0.3);
        assert_eq!(c.pipeline.retrieval.coarse_budget, 50);
    }

    #[test]
    fn file_rejects_secrets_and_unknown_keys() {
        let e = parse_config_file("llm_api_key = x", Path::new("c")).unwrap_err();
        assert!(e.downcast_ref::<UsageError>().unwrap().0.contains("environment only"));
        assert!(parse_config_file("colour = red", Path::new("c")).is_err());
        assert!(parse_config_file("just text", Path::new("c")).is_err());
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let l = layers(&[("strategy", "semantic")], &[], "");
        assert!(CliConfig::resolve(&l).unwrap_err().downcast_ref::<UsageError>().is_some());
        let l = layers(&[("provider", "carrier-pigeon")], &[], "");
        assert!(CliConfig::resolve(&l).is_err());
    }

    #[test]
    fn credentials_never_print() {
        let c = Credentials {
            llm: Some("sk-very-secret".into()),
            ..Default::default()
        };
        assert!(!format!("{c:?}").contains("sk-very"));
    }
}
