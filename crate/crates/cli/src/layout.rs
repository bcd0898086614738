//! Run-directory layout. Stages communicate only through these files;
//! no command mutates another stage's outputs.

use std::path::{Path, PathBuf};

/// All paths of one run, rooted at the output directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl AsRef<Path>) -> Self {
        RunLayout {
            root: root.as_ref().to_path_buf(),
        }
    }

    pub fn snapshot(&self, command: &str, aug_tag: &str) -> PathBuf {
        self.root
            .join("snapshots")
            .join(format!("{command}_{aug_tag}.toml"))
    }

    pub fn dataset_dir(&self, dataset: &str) -> PathBuf {
        self.root.join("data").join(dataset)
    }

    pub fn data_root(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn model_dir(&self, dataset: &str, aug_tag: &str) -> PathBuf {
        self.root
            .join("models")
            .join(format!("{dataset}_{aug_tag}"))
    }

    pub fn base_dir(&self, dataset: &str, aug_tag: &str) -> PathBuf {
        self.model_dir(dataset, aug_tag).join("base")
    }

    pub fn fusion_dir(&self, dataset: &str, aug_tag: &str) -> PathBuf {
        self.model_dir(dataset, aug_tag).join("fusion")
    }

    pub fn learner_file(
        &self,
        dataset: &str,
        aug_tag: &str,
        family: usize,
        slot: usize,
    ) -> PathBuf {
        self.base_dir(dataset, aug_tag)
            .join(format!("learner_f{family}_i{slot}.json"))
    }

    pub fn learner_history_file(
        &self,
        dataset: &str,
        aug_tag: &str,
        family: usize,
        slot: usize,
    ) -> PathBuf {
        self.base_dir(dataset, aug_tag)
            .join(format!("history_f{family}_i{slot}.csv"))
    }

    pub fn fusion_weights_file(&self, dataset: &str, aug_tag: &str) -> PathBuf {
        self.fusion_dir(dataset, aug_tag).join("weights.json")
    }

    pub fn fusion_history_file(&self, dataset: &str, aug_tag: &str) -> PathBuf {
        self.fusion_dir(dataset, aug_tag).join("history.csv")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn evaluate_table(&self, train: &str, eval: &str, aug_tag: &str, ext: &str) -> PathBuf {
        self.reports_dir()
            .join(format!("evaluate_{train}_on_{eval}_{aug_tag}.{ext}"))
    }

    pub fn cross_eval_table(&self, train: &str, eval: &str, aug_tag: &str, ext: &str) -> PathBuf {
        self.reports_dir()
            .join(format!("cross_eval_{train}_to_{eval}_{aug_tag}.{ext}"))
    }

    pub fn uniform_baseline_table(
        &self,
        train: &str,
        eval: &str,
        aug_tag: &str,
        ext: &str,
    ) -> PathBuf {
        self.reports_dir().join(format!(
            "uniform_vs_learned_{train}_to_{eval}_{aug_tag}.{ext}"
        ))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    /// Datasets materialized under `data/`, sorted.
    pub fn available_datasets(&self) -> Vec<String> {
        let mut names = Vec::new();
        if let Ok(entries) = std::fs::read_dir(self.data_root()) {
            for entry in entries.flatten() {
                if entry.path().is_dir() {
                    if let Some(name) = entry.file_name().to_str() {
                        names.push(name.to_string());
                    }
                }
            }
        }
        names.sort();
        names
    }
}
