//! Run bookkeeping shared by the subcommands: errors and exit codes, the
//! provenance block written into every artifact, model loading and logging.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use oqw_core::format::ModelFile;
use oqw_core::{ErrorClass, WalkError, WalkModel};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "ctoqw";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        CliError { class, message: message.into() }
    }

    pub fn precondition(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Precondition, message)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(exit_status(self.class))
    }
}

pub fn exit_status(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Parse => 1,
        ErrorClass::Validation => 2,
        ErrorClass::NonConvergence => 3,
        ErrorClass::Precondition => 4,
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<WalkError> for CliError {
    fn from(e: WalkError) -> Self {
        CliError::new(e.class(), e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(ErrorClass::Parse, format!("{}: {e}", path.display()))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy)]
pub struct Logger {
    json: bool,
}

impl Logger {
    pub fn new(json: bool) -> Self {
        Logger { json }
    }

    pub fn log(&self, level: &str, message: &str, fields: Value) {
        let line = if self.json {
            json!({ "level": level, "msg": message, "fields": fields }).to_string()
        } else if fields.as_object().is_some_and(|m| !m.is_empty()) {
            format!("{level}: {message} {fields}")
        } else {
            format!("{level}: {message}")
        };
        let _ = writeln!(std::io::stderr(), "{line}");
    }

    pub fn info(&self, message: &str, fields: Value) {
        self.log("info", message, fields);
    }

    pub fn warn(&self, message: &str, fields: Value) {
        self.log("warn", message, fields);
    }

    pub fn error(&self, message: &str) {
        self.log("error", message, json!({}));
    }
}

/// A model document together with the digest of the bytes it was read from.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub path: PathBuf,
    pub sha256: String,
    pub doc: ModelFile,
}

impl LoadedModel {
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|e| CliError::new(ErrorClass::Parse, format!("{}: {e}", path.display())))?;
        let doc = ModelFile::from_json(&text)?;
        Ok(LoadedModel { path: path.to_path_buf(), sha256: sha256_hex(&bytes), doc })
    }

    /// Builds the walk, resized to `window` for lattice documents, and
    /// rejects models that fail validation.
    pub fn build(&self, window: Option<i64>) -> CliResult<WalkModel> {
        let doc = match window {
            Some(n) => self.doc.with_window(n)?,
            None => self.doc.clone(),
        };
        let model = doc.build()?;
        let report = oqw_core::validate(&model);
        if let Some(first) = report.failures().next() {
            return Err(CliError::new(
                ErrorClass::Validation,
                format!(
                    "model fails check `{}`{} (residual {:.3e} above {:.3e})",
                    first.name,
                    first.vertex.as_deref().map(|v| format!(" at vertex {v}")).unwrap_or_default(),
                    first.residual,
                    first.threshold
                ),
            ));
        }
        Ok(model)
    }

    /// Window list of a study: the requested windows, or the document's own
    /// window for lattices, or a single untruncated run.
    pub fn windows(&self, requested: &[i64]) -> CliResult<Vec<Option<i64>>> {
        if requested.is_empty() {
            return Ok(vec![None]);
        }
        if !self.doc.is_lattice() {
            return Err(CliError::precondition("--window applies to lattice models only"));
        }
        Ok(requested.iter().map(|&w| Some(w)).collect())
    }
}

/// Inputs of one invocation, recorded verbatim in its artifacts.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static str,
    pub model_path: Option<PathBuf>,
    pub model_sha256: Option<String>,
    pub seed: u64,
    pub tolerances: BTreeMap<&'static str, f64>,
    pub windows: Vec<i64>,
    pub outputs: Vec<PathBuf>,
}

impl RunConfig {
    pub fn new(command: &'static str, seed: u64) -> Self {
        RunConfig {
            command,
            model_path: None,
            model_sha256: None,
            seed,
            tolerances: BTreeMap::new(),
            windows: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn with_model(mut self, model: &LoadedModel) -> Self {
        self.model_path = Some(model.path.clone());
        self.model_sha256 = Some(model.sha256.clone());
        self
    }

    pub fn tolerance(mut self, name: &'static str, value: f64) -> CliResult<Self> {
        if !(value > 0.0) {
            return Err(CliError::precondition(format!("tolerance `{name}` must be positive, got {value}")));
        }
        self.tolerances.insert(name, value);
        Ok(self)
    }

    pub fn output(mut self, path: &Option<PathBuf>) -> Self {
        self.outputs.extend(path.iter().cloned());
        self
    }

    /// Effective lattice window, from the flags or from the model document.
    pub fn window(mut self, requested: &[i64], model: &LoadedModel) -> Self {
        self.windows = if requested.is_empty() {
            model.doc.window().map(|(_, hi)| vec![hi]).unwrap_or_default()
        } else {
            requested.to_vec()
        };
        self
    }

    pub fn to_json(&self) -> Value {
        json!({
            "tool": TOOL,
            "version": VERSION,
            "command": self.command,
            "model": self.model_path.as_ref().map(|p| p.display().to_string()),
            "model_sha256": self.model_sha256,
            "seed": self.seed,
            "tolerances": self.tolerances,
            "windows": self.windows,
        })
    }

    /// The same block as `# key: value` lines for the head of a CSV file.
    pub fn csv_preamble(&self) -> String {
        let mut out = String::new();
        if let Value::Object(map) = self.to_json() {
            for (k, v) in map {
                out.push_str(&format!("# {k}: {v}\n"));
            }
        }
        out
    }
}

/// Writes `contents` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, contents: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, contents).map_err(|e| io_error(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents).and_then(|_| out.flush()).map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

/// Pretty JSON document with the run block under `run`.
pub fn emit_json(path: Option<&Path>, run: &RunConfig, mut body: Value) -> CliResult<()> {
    if let Value::Object(map) = &mut body {
        map.insert("run".into(), run.to_json());
    }
    let mut text = serde_json::to_string_pretty(&body).expect("reports serialize");
    text.push('\n');
    emit(path, text.as_bytes())
}
