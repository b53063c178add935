use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use ubm_core::sim::Scheme;

/// Flags shared by every command. Unset flags fall back to the config file,
/// then to built-in defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    /// Trace-tuple, e.g. "tr(u12 u21)"; sums of tuples are joined with '+'
    #[arg(long)]
    pub word: Option<String>,
    /// Number of blocks per side
    #[arg(long)]
    pub n: Option<usize>,
    /// Block size
    #[arg(long)]
    pub d: Option<usize>,
    /// Single evaluation time
    #[arg(long)]
    pub t: Option<f64>,
    /// Comma-separated evaluation times
    #[arg(long)]
    pub times: Option<String>,
    /// Monte Carlo paths
    #[arg(long)]
    pub paths: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest integrator step
    #[arg(long)]
    pub dt: Option<f64>,
    /// geodesic, geodesic-tc or euler-renorm
    #[arg(long)]
    pub scheme: Option<String>,
    /// moments: free or biane-finite; schurmann: base, gaussianity or crosscheck
    #[arg(long, alias = "check")]
    pub mode: Option<String>,
    /// Comma-separated block sizes
    #[arg(long = "d-list")]
    pub d_list: Option<String>,
    /// Longest product or word considered by schurmann checks
    #[arg(long = "max-len")]
    pub max_len: Option<usize>,
    /// Worker threads for simulations
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output file; a manifest is written next to it
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file supplying defaults for the flags above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

const KEYS: [&str; 13] = [
    "word", "n", "d", "t", "times", "paths", "seed", "dt", "scheme", "mode", "d-list", "max-len",
    "threads",
];

/// Effective settings: config-file values overridden by flags.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn resolve(flags: &Flags) -> Result<Settings, String> {
        let mut values = BTreeMap::new();
        if let Some(path) = &flags.config {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| format!("config line {}: expected key=value", lineno + 1))?;
                let key = key.trim().replace('_', "-");
                if !KEYS.contains(&key.as_str()) {
                    return Err(format!("config line {}: unknown key '{key}'", lineno + 1));
                }
                values.insert(key, value.trim().to_string());
            }
        }
        let overrides = [
            ("word", flags.word.clone()),
            ("n", flags.n.map(|v| v.to_string())),
            ("d", flags.d.map(|v| v.to_string())),
            ("t", flags.t.map(|v| v.to_string())),
            ("times", flags.times.clone()),
            ("paths", flags.paths.map(|v| v.to_string())),
            ("seed", flags.seed.map(|v| v.to_string())),
            ("dt", flags.dt.map(|v| v.to_string())),
            ("scheme", flags.scheme.clone()),
            ("mode", flags.mode.clone()),
            ("d-list", flags.d_list.clone()),
            ("max-len", flags.max_len.map(|v| v.to_string())),
            ("threads", flags.threads.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        }
        Ok(Settings { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| format!("invalid value for --{key}: '{v}'"))
            })
            .transpose()
    }

    pub fn get_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, String>
    where
        T: ToString,
    {
        match self.parsed(key)? {
            Some(v) => Ok(v),
            None => {
                self.values.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        self.parsed(key)?
            .ok_or_else(|| format!("--{key} is required"))
    }

    pub fn word(&self) -> Result<String, String> {
        self.require("word")
    }

    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, String> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<T>()
                            .map_err(|_| format!("invalid entry '{x}' in --{key}"))
                    })
                    .collect()
            })
            .transpose()
    }

    /// `--times`, else `--t`, else `[1]`.
    pub fn times(&mut self) -> Result<Vec<f64>, String> {
        if let Some(ts) = self.list::<f64>("times")? {
            if ts.is_empty() || ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err("--times must be non-negative numbers".into());
            }
            return Ok(ts);
        }
        Ok(vec![self.get_or("t", 1.0)?])
    }

    pub fn scheme(&mut self) -> Result<Scheme, String> {
        let name = self.get_or("scheme", Scheme::default().name().to_string())?;
        name.parse().map_err(|e: ubm_core::Error| e.to_string())
    }

    pub fn to_map(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let dir = std::env::temp_dir().join(format!("ubm-settings-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        fs::write(&path, "# defaults\npaths = 500\nseed=9\nmax_len = 4\n").unwrap();
        let flags = Flags {
            seed: Some(3),
            config: Some(path),
            ..Flags::default()
        };
        let mut s = Settings::resolve(&flags).unwrap();
        assert_eq!(s.get_or("paths", 1usize).unwrap(), 500);
        assert_eq!(s.get_or("seed", 0u64).unwrap(), 3);
        assert_eq!(s.get_or("max-len", 3usize).unwrap(), 4);
        assert_eq!(s.get_or("dt", 0.05).unwrap(), 0.05);
        assert_eq!(s.raw("dt"), Some("0.05"));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn bad_config_lines_are_reported() {
        let dir = std::env::temp_dir().join(format!("ubm-settings-bad-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.cfg");
        fs::write(&path, "colour = blue\n").unwrap();
        let flags = Flags {
            config: Some(path.clone()),
            ..Flags::default()
        };
        assert!(Settings::resolve(&flags)
            .unwrap_err()
            .contains("unknown key"));
        fs::write(&path, "paths 4\n").unwrap();
        assert!(Settings::resolve(&flags).unwrap_err().contains("key=value"));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn times_fall_back_to_t() {
        let mut s = Settings::resolve(&Flags {
            t: Some(0.5),
            ..Flags::default()
        })
        .unwrap();
        assert_eq!(s.times().unwrap(), vec![0.5]);
        let mut s = Settings::resolve(&Flags {
            times: Some("0, 0.5,2".into()),
            ..Flags::default()
        })
        .unwrap();
        assert_eq!(s.times().unwrap(), vec![0.0, 0.5, 2.0]);
    }
}
