//! Report upload with an on-disk queue for offline operation.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use super::report::SessionReport;
use super::AnalyticsError;

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct UploadConfig {
    pub portal_url: String,
    pub portal_token: String,
    pub queue_dir: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
}

fn default_timeout() -> f64 {
    5.0
}

impl UploadConfig {
    /// Parse a `key = "value"` config file.
    pub fn from_toml_str(s: &str) -> Result<Self, AnalyticsError> {
        toml::from_str(s).map_err(|e| AnalyticsError::Config(e.message().to_owned()))
    }

    pub fn load(path: &Path) -> Result<Self, AnalyticsError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UploadOutcome {
    Acknowledged,
    /// Network failure or server error; the report waits in the queue.
    Queued(PathBuf),
    /// The portal refused the report; it was moved to `queue_dir/failed`.
    Rejected {
        status: u16,
        record: PathBuf,
    },
}

enum Attempt {
    Ok,
    Retry(String),
    Refused(u16, String),
}

fn post(cfg: &UploadConfig, body: &str) -> Attempt {
    let result = ureq::post(&cfg.portal_url)
        .timeout(Duration::from_secs_f64(cfg.timeout_s))
        .set("Authorization", &format!("Bearer {}", cfg.portal_token))
        .set("Content-Type", "application/json")
        .send_string(body);
    match result {
        Ok(_) => Attempt::Ok,
        Err(ureq::Error::Status(code, resp)) if (400..500).contains(&code) => Attempt::Refused(code, resp.into_string().unwrap_or_default()),
        Err(ureq::Error::Status(code, _)) => Attempt::Retry(format!("server status {code}")),
        Err(e) => Attempt::Retry(e.to_string()),
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), AnalyticsError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn queue_path(cfg: &UploadConfig, report: &SessionReport) -> PathBuf {
    cfg.queue_dir.join(format!("{}-{}.json", sanitize(&report.session_id), report.finished_us))
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn reject(cfg: &UploadConfig, name: &str, body: &str, status: u16, reason: &str) -> Result<PathBuf, AnalyticsError> {
    let dir = cfg.queue_dir.join("failed");
    fs::create_dir_all(&dir)?;
    let record = dir.join(name);
    write_atomic(&record, body)?;
    write_atomic(&record.with_extension("reason"), &format!("status {status}: {reason}\n"))?;
    log::warn!("portal rejected {name} with status {status}");
    Ok(record)
}

pub fn upload_report(report: &SessionReport, cfg: &UploadConfig) -> Result<UploadOutcome, AnalyticsError> {
    let body = serde_json::to_string(report)?;
    let path = queue_path(cfg, report);
    match post(cfg, &body) {
        Attempt::Ok => Ok(UploadOutcome::Acknowledged),
        Attempt::Retry(why) => {
            fs::create_dir_all(&cfg.queue_dir)?;
            write_atomic(&path, &body)?;
            log::info!("upload deferred ({why}); queued {}", path.display());
            Ok(UploadOutcome::Queued(path))
        }
        Attempt::Refused(status, reason) => {
            let name = path.file_name().expect("queue file name").to_string_lossy().into_owned();
            let record = reject(cfg, &name, &body, status, &reason)?;
            Ok(UploadOutcome::Rejected { status, record })
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlushSummary {
    pub delivered: usize,
    pub still_queued: usize,
    pub rejected: usize,
}

/// Retry every queued report in name order.
pub fn flush_queue(cfg: &UploadConfig) -> Result<FlushSummary, AnalyticsError> {
    let mut summary = FlushSummary::default();
    let Ok(entries) = fs::read_dir(&cfg.queue_dir) else {
        return Ok(summary);
    };
    let mut files: Vec<PathBuf> =
        entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json")).collect();
    files.sort();
    for path in files {
        let body = fs::read_to_string(&path)?;
        match post(cfg, &body) {
            Attempt::Ok => {
                fs::remove_file(&path)?;
                summary.delivered += 1;
            }
            Attempt::Retry(_) => summary.still_queued += 1,
            Attempt::Refused(status, reason) => {
                let name = path.file_name().expect("listed file").to_string_lossy().into_owned();
                reject(cfg, &name, &body, status, &reason)?;
                fs::remove_file(&path)?;
                summary.rejected += 1;
            }
        }
    }
    Ok(summary)
}
