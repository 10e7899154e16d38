// SPDX-License-Identifier: MIT OR Apache-2.0

//! Resolved run configuration: defaults, then a `key = value` file, then flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tokseg_core::dataio::Delimiter;
use tokseg_core::summarizer::{DEFAULT_CHUNKS, DEFAULT_COMPONENTS};
use tokseg_core::{SummaryMethod, TokenizerConfig};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    /// One labeled univariate series per line.
    Rows,
    /// One multivariate series per CSV file.
    Csv,
    /// `path,label` lines pointing at CSV series.
    Manifest,
}

impl InputFormat {
    fn as_str(self) -> &'static str {
        match self {
            Self::Rows => "rows",
            Self::Csv => "csv",
            Self::Manifest => "manifest",
        }
    }
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rows" => Ok(Self::Rows),
            "csv" => Ok(Self::Csv),
            "manifest" => Ok(Self::Manifest),
            other => Err(format!(
                "unknown format `{other}` (expected rows, csv, or manifest)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliConfig {
    pub tokenizer: TokenizerConfig,
    pub method: SummaryMethod,
    pub methods: Vec<SummaryMethod>,
    pub seed: u64,
    pub sigmas: Vec<f64>,
    pub n_chunks: usize,
    pub k: usize,
    pub threads: usize,
    pub tol: usize,
    pub format: Option<InputFormat>,
    pub delimiter: Delimiter,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerConfig::default(),
            method: SummaryMethod::Mean,
            methods: vec![
                SummaryMethod::Mean,
                SummaryMethod::Uniform,
                SummaryMethod::Gmm,
            ],
            seed: 0,
            sigmas: vec![0.5],
            n_chunks: DEFAULT_CHUNKS,
            k: DEFAULT_COMPONENTS,
            threads: 0,
            tol: 20,
            format: None,
            delimiter: Delimiter::Comma,
            input: None,
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value `{value}` for `{key}`")))
}

pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

impl CliConfig {
    /// Applies one `key = value` setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let t = &mut self.tokenizer;
        match key {
            "delta_min" => t.delta_min = parse(key, value)?,
            "delta_max" => t.delta_max = parse(key, value)?,
            "delta_step" => t.delta_step = parse(key, value)?,
            "stride" => t.stride = parse(key, value)?,
            "alpha" => t.alpha = parse(key, value)?,
            "s_min" => t.s_min = parse(key, value)?,
            "epsilon" => t.epsilon = parse(key, value)?,
            "lambda" => t.lambda = parse(key, value)?,
            "method" => self.method = parse(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "sigmas" => self.sigmas = parse_list(key, value)?,
            "n_chunks" | "chunks" => self.n_chunks = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "format" => {
                self.format = Some(value.parse().map_err(CliError::Usage)?);
            }
            "delimiter" => self.delimiter = parse(key, value)?,
            "input" => self.input = Some(PathBuf::from(value)),
            "out" | "output" => self.out = Some(PathBuf::from(value)),
            other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), CliError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{source}:{}: expected `key = value`", idx + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Usage(format!("{source}:{}: {}", idx + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.tokenizer
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.k == 0 {
            return Err(CliError::Usage("k must be >= 1".into()));
        }
        if self.n_chunks == 0 {
            return Err(CliError::Usage("n_chunks must be >= 1".into()));
        }
        if let Some(bad) = self.sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(CliError::Usage(format!(
                "noise sigma must be >= 0, got {bad}"
            )));
        }
        Ok(())
    }

    /// The resolved settings in config-file syntax.
    pub fn render(&self) -> String {
        let t = &self.tokenizer;
        let list = |items: Vec<String>| items.join(",");
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("delta_min", t.delta_min.to_string());
        line("delta_max", t.delta_max.to_string());
        line("delta_step", t.delta_step.to_string());
        line("stride", t.stride.to_string());
        line("alpha", t.alpha.to_string());
        line("s_min", t.s_min.to_string());
        line("epsilon", t.epsilon.to_string());
        line("lambda", t.lambda.to_string());
        line("method", self.method.to_string());
        line(
            "methods",
            list(self.methods.iter().map(|m| m.to_string()).collect()),
        );
        line("seed", self.seed.to_string());
        line(
            "sigmas",
            list(self.sigmas.iter().map(|s| s.to_string()).collect()),
        );
        line("n_chunks", self.n_chunks.to_string());
        line("k", self.k.to_string());
        line("threads", self.threads.to_string());
        line("tol", self.tol.to_string());
        if let Some(f) = self.format {
            line("format", f.as_str().to_string());
        }
        line(
            "delimiter",
            match self.delimiter {
                Delimiter::Comma => "comma".into(),
                Delimiter::Tab => "tab".into(),
            },
        );
        if let Some(p) = &self.input {
            line("input", p.display().to_string());
        }
        if let Some(p) = &self.out {
            line("out", p.display().to_string());
        }
        out
    }
}
