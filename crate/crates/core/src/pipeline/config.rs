//! The declarative pipeline configuration file.

use std::num::NonZeroU32;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::PipelineError;
use crate::domain_ingest::ListFormat;
use crate::roa_validation::RoaFormat;

#[derive(Clone, Copy, Debug, Default, Deserialize, Eq, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum DomainListFormat {
    #[default]
    Csv,
    Plain,
}

impl From<DomainListFormat> for ListFormat {
    fn from(f: DomainListFormat) -> Self {
        match f {
            DomainListFormat::Csv => ListFormat::CsvRankDomain,
            DomainListFormat::Plain => ListFormat::PlainOrdered,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Eq, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum RoaFileFormat {
    Csv,
    Json,
}

fn default_bin_size() -> NonZeroU32 {
    NonZeroU32::new(10_000).expect("nonzero")
}

fn default_top_n() -> usize {
    10
}

fn default_qps() -> u32 {
    50
}

fn default_timeout_ms() -> u64 {
    5_000
}

fn default_in_flight() -> usize {
    32
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a pipeline run needs. Relative paths are resolved against
/// the directory holding the configuration file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub domain_list_path: Option<PathBuf>,
    #[serde(default)]
    pub domain_list_format: DomainListFormat,

    /// Recorded DNS answers; takes precedence over `resolvers`.
    pub fixture_dns_path: Option<PathBuf>,
    /// Live resolvers as `label=ip:port`.
    #[serde(default)]
    pub resolvers: Vec<String>,
    /// Resolver whose answers feed the mapping stage. Defaults to the
    /// first one.
    pub primary_resolver: Option<String>,
    #[serde(default = "default_qps")]
    pub queries_per_second: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub in_flight: usize,

    /// Defaults to the bundled IANA registry snapshot.
    pub special_purpose_table_path: Option<PathBuf>,

    #[serde(default)]
    pub rib_paths: Vec<PathBuf>,
    pub roa_path: Option<PathBuf>,
    /// Guessed from the file extension when absent.
    pub roa_format: Option<RoaFileFormat>,

    /// Defaults to the bundled CDN keyword list.
    pub keyword_path: Option<PathBuf>,
    pub as_registry_path: Option<PathBuf>,
    pub external_labels_path: Option<PathBuf>,

    #[serde(default = "default_bin_size")]
    pub bin_size: NonZeroU32,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut config: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.resolve_paths(base_dir);
        config.check()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| PipelineError::MissingInput(path.to_path_buf()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.domain_list_path,
            &mut self.fixture_dns_path,
            &mut self.special_purpose_table_path,
            &mut self.roa_path,
            &mut self.keyword_path,
            &mut self.as_registry_path,
            &mut self.external_labels_path,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        self.rib_paths.iter_mut().for_each(fix);
        fix(&mut self.output_dir);
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        if self.top_n == 0 {
            return Err(PipelineError::Config("top_n must be at least 1".into()));
        }
        if self.queries_per_second == 0 || self.in_flight == 0 {
            return Err(PipelineError::Config(
                "queries_per_second and in_flight must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn roa_format(&self, path: &Path) -> RoaFormat {
        match self.roa_format {
            Some(RoaFileFormat::Json) => RoaFormat::Json,
            Some(RoaFileFormat::Csv) => RoaFormat::Csv,
            None if path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("json")) =>
            {
                RoaFormat::Json
            }
            None => RoaFormat::Csv,
        }
    }
}
