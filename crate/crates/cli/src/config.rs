//! Pipeline configuration: one declarative TOML file plus flag overrides.
//!
//! Relative paths inside the file resolve against the file's own directory,
//! so a config can travel with its fixtures. The workspace override from the
//! command line resolves against the current directory as usual.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use wikitide::bootstrap::RENDER_FORMAT_V1;

/// Problems that make the run not worth starting. These exit with code 2.
#[derive(Debug)]
pub struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError(message.into())
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub harvest: HarvestSection,
    #[serde(default)]
    pub annotation: AnnotationSection,
    pub split: Option<SplitSection>,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub wictsv: WictsvSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    /// Where artifacts go; `--workspace` overrides.
    pub workspace: Option<PathBuf>,
    /// Offline revision dump (newline-delimited JSON pages).
    pub pages: Option<PathBuf>,
    /// Directory holding `{split}_examples.txt` and friends.
    pub wictsv_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarvestSection {
    /// `offline` (dump file) or `live` (wiki API).
    #[serde(default = "default_source")]
    pub source: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_min_gap_days")]
    pub min_gap_days: i64,
    #[serde(default)]
    pub allow_duplicate_pages: bool,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub extra_abbreviations: Vec<String>,
    pub max_page_attempts: Option<usize>,
    /// Live source only.
    pub api_url: Option<String>,
    /// Live source only; defaults to one request per second.
    pub min_request_interval_ms: Option<u64>,
}

fn default_source() -> String {
    "offline".into()
}

fn default_n() -> usize {
    10_000
}

fn default_min_gap_days() -> i64 {
    365
}

impl Default for HarvestSection {
    fn default() -> Self {
        HarvestSection {
            source: default_source(),
            n: default_n(),
            min_gap_days: default_min_gap_days(),
            allow_duplicate_pages: false,
            strict: false,
            extra_abbreviations: Vec::new(),
            max_page_attempts: None,
            api_url: None,
            min_request_interval_ms: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSection {
    /// `heuristic`, `scripted`, or `http`.
    #[serde(default = "default_client")]
    pub client: String,
    /// Canned responses for the scripted client, one JSON object per line:
    /// `{"response": "..."}`.
    pub script: Option<PathBuf>,
    /// Prompt template files replacing the built-in variants; at least four.
    pub variants: Option<Vec<PathBuf>>,
    /// Annotate only the first N harvested pairs; the rest stay unlabeled
    /// and feed the pool at split time.
    pub max_pairs: Option<usize>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_true")]
    pub referee_confirms_unanimity: bool,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

fn default_client() -> String {
    "heuristic".into()
}

fn default_top_p() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_max_retries() -> u32 {
    3
}

impl Default for AnnotationSection {
    fn default() -> Self {
        AnnotationSection {
            client: default_client(),
            script: None,
            variants: None,
            max_pairs: None,
            temperature: 0.0,
            top_p: default_top_p(),
            referee_confirms_unanimity: true,
            max_retries: default_max_retries(),
        }
    }
}

/// Labeled-data partition sizes; the unannotated remainder becomes the pool.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub ts: usize,
    pub hs: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "default_k")]
    pub k: usize,
    pub max_sweeps: Option<usize>,
    #[serde(default = "default_classifier")]
    pub classifier: String,
    #[serde(default)]
    pub drain_predicted_label: bool,
    #[serde(default = "default_render_format")]
    pub render_format: String,
}

fn default_k() -> usize {
    10
}

fn default_classifier() -> String {
    "reference".into()
}

fn default_render_format() -> String {
    RENDER_FORMAT_V1.into()
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection {
            k: default_k(),
            max_sweeps: None,
            classifier: default_classifier(),
            drain_predicted_label: false,
            render_format: default_render_format(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default = "default_embedder")]
    pub embedder: String,
}

fn default_embedder() -> String {
    "tfidf".into()
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            embedder: default_embedder(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WictsvSection {
    /// Which `{split}_*.txt` files to read.
    #[serde(default = "default_split")]
    pub split: String,
    /// `echo` (offline) or `http` (chat endpoint via env vars).
    #[serde(default = "default_generator")]
    pub generator: String,
    #[serde(default = "default_fetch_base_url")]
    pub fetch_base_url: String,
    #[serde(default = "default_fetch_splits")]
    pub fetch_splits: Vec<String>,
}

fn default_split() -> String {
    "dev".into()
}

fn default_generator() -> String {
    "echo".into()
}

fn default_fetch_base_url() -> String {
    "https://raw.githubusercontent.com/semantic-web-company/wic-tsv/master/data/en".into()
}

fn default_fetch_splits() -> Vec<String> {
    vec!["train".into(), "dev".into(), "test".into()]
}

impl Default for WictsvSection {
    fn default() -> Self {
        WictsvSection {
            split: default_split(),
            generator: default_generator(),
            fetch_base_url: default_fetch_base_url(),
            fetch_splits: default_fetch_splits(),
        }
    }
}

/// Command-line overrides, decoupled from the clap structs.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workspace: Option<PathBuf>,
    pub limit: Option<usize>,
    pub classifier: Option<String>,
    pub strict: bool,
}

/// The validated configuration a subcommand runs with.
#[derive(Debug)]
pub struct Settings {
    pub file: FileConfig,
    config_dir: PathBuf,
    pub seed: u64,
    pub workspace: PathBuf,
    pub limit: Option<usize>,
    /// `--classifier` beats `[bootstrap] classifier`.
    pub classifier: String,
    /// `--strict` beats `[harvest] strict`.
    pub strict: bool,
}

impl Settings {
    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.config_dir.join(path)
        }
    }

    pub fn pages_path(&self) -> Option<PathBuf> {
        self.file.paths.pages.as_deref().map(|p| self.resolve(p))
    }

    pub fn wictsv_dir(&self) -> Option<PathBuf> {
        self.file.paths.wictsv_dir.as_deref().map(|p| self.resolve(p))
    }

    pub fn script_path(&self) -> Option<PathBuf> {
        self.file.annotation.script.as_deref().map(|p| self.resolve(p))
    }

    pub fn variant_paths(&self) -> Option<Vec<PathBuf>> {
        self.file
            .annotation
            .variants
            .as_ref()
            .map(|paths| paths.iter().map(|p| self.resolve(p)).collect())
    }

    /// Digest-map keys use the path exactly as configured so manifests stay
    /// byte-identical across machines and workspace locations.
    pub fn configured_name(path: &Path) -> String {
        path.to_string_lossy().into_owned()
    }
}

fn require_exists(path: &Path, what: &str) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(invalid(format!("{what} {} does not exist", path.display())))
    }
}

/// Loads the config file, applies overrides, and validates what `command`
/// needs. Every failure here maps to exit code 2.
pub fn load(path: &Path, overrides: &Overrides, command: &str) -> Result<Settings, ConfigError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("config file {} cannot be read: {e}", path.display())))?;
    let file: FileConfig = toml::from_str(&raw)
        .map_err(|e| invalid(format!("config file {}: {e}", path.display())))?;

    let seed = overrides.seed.or(file.seed).ok_or_else(|| {
        invalid(format!(
            "missing `seed` (set it in {} or pass --seed)",
            path.display()
        ))
    })?;
    let config_dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let workspace = match (&overrides.workspace, &file.paths.workspace) {
        (Some(ws), _) => ws.clone(),
        (None, Some(ws)) => {
            if ws.is_absolute() {
                ws.clone()
            } else {
                config_dir.join(ws)
            }
        }
        (None, None) => {
            return Err(invalid(format!(
                "missing workspace directory (set [paths] workspace in {} or pass --workspace)",
                path.display()
            )))
        }
    };

    let classifier = overrides
        .classifier
        .clone()
        .unwrap_or_else(|| file.bootstrap.classifier.clone());
    let strict = overrides.strict || file.harvest.strict;

    let settings = Settings {
        file,
        config_dir,
        seed,
        workspace,
        limit: overrides.limit,
        classifier,
        strict,
    };
    validate(&settings, command)?;
    Ok(settings)
}

fn validate(settings: &Settings, command: &str) -> Result<(), ConfigError> {
    let file = &settings.file;

    match file.harvest.source.as_str() {
        "offline" | "live" => {}
        other => {
            return Err(invalid(format!(
                "[harvest] source must be \"offline\" or \"live\", got {other:?}"
            )))
        }
    }
    match file.annotation.client.as_str() {
        "heuristic" | "scripted" | "http" => {}
        other => {
            return Err(invalid(format!(
                "[annotation] client must be \"heuristic\", \"scripted\", or \"http\", got {other:?}"
            )))
        }
    }
    if file.evaluation.embedder != "tfidf" {
        return Err(invalid(format!(
            "[evaluation] embedder must be \"tfidf\" (the only built-in), got {:?}",
            file.evaluation.embedder
        )));
    }
    match file.wictsv.generator.as_str() {
        "echo" | "http" => {}
        other => {
            return Err(invalid(format!(
                "[wictsv] generator must be \"echo\" or \"http\", got {other:?}"
            )))
        }
    }
    let name = &settings.classifier;
    if name != "reference" && name != "reference-warm" && !name.starts_with("external:") {
        return Err(invalid(format!(
            "unknown classifier {name:?} (built-ins: reference, reference-warm; \
             or external:<command line>)"
        )));
    }

    match command {
        "harvest" => {
            if file.harvest.source == "offline" {
                let pages = settings.pages_path().ok_or_else(|| {
                    invalid("offline harvest needs [paths] pages to point at a revision dump")
                })?;
                require_exists(&pages, "[paths] pages")?;
            }
        }
        "annotate" => {
            if file.annotation.client == "scripted" {
                let script = settings.script_path().ok_or_else(|| {
                    invalid("scripted annotation needs [annotation] script")
                })?;
                require_exists(&script, "[annotation] script")?;
            }
            if let Some(variants) = settings.variant_paths() {
                if variants.len() < 4 {
                    return Err(invalid(format!(
                        "[annotation] variants lists {} file(s); need at least 4 \
                         (three primaries plus a referee)",
                        variants.len()
                    )));
                }
                for path in &variants {
                    require_exists(path, "[annotation] variants entry")?;
                }
            }
        }
        "split" => {
            let split = file
                .split
                .ok_or_else(|| invalid("the `split` subcommand needs a [split] section with `ts` and `hs`"))?;
            if split.ts == 0 || split.hs == 0 {
                return Err(invalid("[split] ts and hs must both be positive"));
            }
        }
        "wictsv" => {
            let dir = settings
                .wictsv_dir()
                .ok_or_else(|| invalid("the `wictsv` subcommand needs [paths] wictsv_dir"))?;
            let split = &file.wictsv.split;
            for kind in ["examples", "definitions"] {
                require_exists(
                    &dir.join(format!("{split}_{kind}.txt")),
                    "wictsv input file",
                )?;
            }
        }
        "fetch" if settings.wictsv_dir().is_none() => {
            return Err(invalid("the `fetch` subcommand needs [paths] wictsv_dir"));
        }
        _ => {}
    }

    Ok(())
}
