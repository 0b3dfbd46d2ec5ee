//! Scene-independent train/test assignment: leave one video out per
//! category, with the PTZ category absent and copyMachine excluded.

use super::DataError;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitEntry {
    pub category: String,
    pub video: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitManifest {
    pub entries: Vec<SplitEntry>,
}

impl SplitManifest {
    pub fn categories(&self) -> Vec<String> {
        let mut cats = Vec::new();
        for e in &self.entries {
            if !cats.contains(&e.category) {
                cats.push(e.category.clone());
            }
        }
        cats
    }

    pub fn videos_with_role(&self, role: Role) -> Vec<&SplitEntry> {
        self.entries.iter().filter(|e| e.role == role).collect()
    }

    pub fn lookup(&self, category: &str, video: &str) -> Option<&SplitEntry> {
        self.entries
            .iter()
            .find(|e| e.category == category && e.video == video)
    }

    /// Leave-one-video-out invariant: exactly one test video per category
    /// and no video listed twice.
    pub fn validate(&self) -> Result<(), DataError> {
        for cat in self.categories() {
            let tests = self
                .entries
                .iter()
                .filter(|e| e.category == cat && e.role == Role::Test)
                .count();
            if tests != 1 {
                return Err(DataError::Manifest(format!(
                    "category {} has {} test videos, expected exactly 1",
                    cat, tests
                )));
            }
        }
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                if a.category == b.category && a.video == b.video {
                    return Err(DataError::Manifest(format!(
                        "video {}/{} listed twice",
                        a.category, a.video
                    )));
                }
            }
        }
        Ok(())
    }

    /// CSV with header `category,video,role`.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut out = String::from("category,video,role\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.category, e.video, e.role.as_str()));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some("category,video,role") => {}
            _ => {
                return Err(DataError::Manifest(format!(
                    "{}: missing header",
                    path.display()
                )))
            }
        }
        let mut entries = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(DataError::Manifest(format!(
                    "{}: line {}: expected 3 fields",
                    path.display(),
                    ln + 2
                )));
            }
            let role = match parts[2].trim() {
                "train" => Role::Train,
                "test" => Role::Test,
                other => {
                    return Err(DataError::Manifest(format!(
                        "{}: line {}: unknown role {:?}",
                        path.display(),
                        ln + 2,
                        other
                    )))
                }
            };
            entries.push(SplitEntry {
                category: parts[0].trim().to_string(),
                video: parts[1].trim().to_string(),
                role,
            });
        }
        Ok(SplitManifest { entries })
    }
}

/// The published scene-independent division over CDnet 2014: ten
/// categories (PTZ excluded for camera motion), one test video each,
/// copyMachine dropped from the shadow training set. Directory names
/// follow the dataset's on-disk spelling.
pub fn table2_manifest() -> SplitManifest {
    let rows: &[(&str, &[&str], &str)] = &[
        ("badWeather", &["skating", "snowFall", "wetSnow"], "blizzard"),
        ("baseline", &["highway", "office", "PETS2006"], "pedestrians"),
        ("cameraJitter", &["badminton", "boulevard", "sidewalk"], "traffic"),
        (
            "dynamicBackground",
            &["canoe", "fall", "fountain01", "fountain02", "overpass"],
            "boats",
        ),
        (
            "intermittentObjectMotion",
            &["abandonedBox", "sofa", "streetLight", "tramstop", "winterDriveway"],
            "parking",
        ),
        (
            "lowFramerate",
            &["port_0_17fps", "tramCrossroad_1fps", "tunnelExit_0_35fps"],
            "turnpike_0_5fps",
        ),
        (
            "nightVideos",
            &["bridgeEntry", "busyBoulvard", "fluidHighway", "streetCornerAtNight", "winterStreet"],
            "tramStation",
        ),
        (
            "shadow",
            &["backdoor", "bungalows", "cubicle", "peopleInShade"],
            "busStation",
        ),
        (
            "thermal",
            &["diningRoom", "lakeSide", "library", "park"],
            "corridor",
        ),
        (
            "turbulence",
            &["turbulence1", "turbulence2", "turbulence3"],
            "turbulence0",
        ),
    ];
    let mut entries = Vec::new();
    for (cat, trains, test) in rows {
        for v in *trains {
            entries.push(SplitEntry {
                category: cat.to_string(),
                video: v.to_string(),
                role: Role::Train,
            });
        }
        entries.push(SplitEntry {
            category: cat.to_string(),
            video: test.to_string(),
            role: Role::Test,
        });
    }
    SplitManifest { entries }
}
