//! Corpus statistics over written record shards.

use cmdsynth_core::dataset::{
    corpus_stats, read_records, stats_to_csv, stats_to_json, CorpusStats, DatasetError, StatsFilter,
};

use crate::campaign::CampaignError;

#[derive(Clone, Debug, Default)]
pub struct StatsConfig {
    /// Records to read: a directory, a file, or a wildcard pattern.
    pub records: String,
    /// Keep records with irreducibility >= this.
    pub score_min: Option<f64>,
    /// Keep records with irreducibility <= this.
    pub score_max: Option<f64>,
    /// Tag echoed into the emitted rows.
    pub label: Option<String>,
}

#[derive(Debug)]
pub struct StatsOutcome {
    pub stats: CorpusStats,
    pub csv: String,
    pub json: String,
    /// Records read before filtering.
    pub records_read: usize,
}

pub fn run_stats(config: &StatsConfig) -> Result<StatsOutcome, CampaignError> {
    for bound in [config.score_min, config.score_max].into_iter().flatten() {
        if !(0.0..=1.0).contains(&bound) {
            return Err(CampaignError::Config(format!(
                "score bound {bound} outside [0, 1]"
            )));
        }
    }
    if let (Some(lo), Some(hi)) = (config.score_min, config.score_max) {
        if lo > hi {
            return Err(CampaignError::Config(format!(
                "score bounds [{lo}, {hi}] are inverted"
            )));
        }
    }
    // An unreadable path is a configuration mistake; records that read but
    // fail validation are runtime data errors and keep their file:line.
    let records = read_records(&config.records).map_err(|e| match e {
        DatasetError::Io(io) => {
            CampaignError::Config(format!("records {}: {io}", config.records))
        }
        other => CampaignError::Dataset(other),
    })?;
    let filter = StatsFilter {
        score_min: config.score_min,
        score_max: config.score_max,
        label: config.label.clone(),
    };
    let stats = corpus_stats(&records, &filter);
    Ok(StatsOutcome {
        csv: stats_to_csv(&stats),
        json: stats_to_json(&stats),
        records_read: records.len(),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{run_campaign, BackendKind, CampaignConfig};
    use cmdsynth_core::grammar::SynthesisMode;

    #[test]
    fn stats_read_back_a_written_campaign() {
        let dir = tempfile::tempdir().unwrap();
        run_campaign(&CampaignConfig {
            grammar_path: None,
            mode: SynthesisMode::Gcs,
            samples: 6,
            budget: 16,
            max_args: 5,
            max_commands: 3,
            backend: BackendKind::Sim,
            seed: 3,
            out_dir: dir.path().to_path_buf(),
            score_filter: None,
            noise_traces: 3,
            workers: 1,
        })
        .unwrap();

        let outcome = run_stats(&StatsConfig {
            records: dir.path().to_str().unwrap().to_string(),
            label: Some("smoke".to_string()),
            ..StatsConfig::default()
        })
        .unwrap();
        assert_eq!(outcome.records_read, 6);
        assert_eq!(outcome.stats.total_records, 6);
        assert!(outcome.csv.starts_with("label,n_args,count,mean,std\n"));
        assert!(outcome.csv.contains("smoke,"));
        assert!(outcome.json.contains("\"total_records\": 6"));
    }

    #[test]
    fn bad_bounds_and_missing_paths_are_config_errors() {
        let err = run_stats(&StatsConfig {
            records: "whatever".into(),
            score_min: Some(1.5),
            ..StatsConfig::default()
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);

        let err = run_stats(&StatsConfig {
            records: "/nonexistent/records-*.ndjson".into(),
            ..StatsConfig::default()
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("/nonexistent"));
    }
}
