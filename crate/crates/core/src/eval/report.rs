use std::fmt;
use std::str::FromStr;

use super::SerReport;
use crate::model::DecoderKind;

/// Which part of a test split a report covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subset {
    Full,
    /// Samples of density at least the hard threshold.
    Hard,
}

impl Subset {
    pub const ALL: [Subset; 2] = [Subset::Full, Subset::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Subset::Full => "full",
            Subset::Hard => "hard",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subset::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown subset `{s}` (full, hard)"))
    }
}

/// Aligned text table: one row per decoder, rhythm then pitch SER (%) for
/// each subset. Missing cells print as `-`.
pub fn comparison_table(reports: &[SerReport]) -> String {
    let cell = |d: DecoderKind, s: Subset, pick: fn(&SerReport) -> f64| {
        reports
            .iter()
            .find(|r| r.decoder == d && r.subset == s)
            .map_or_else(|| "-".to_string(), |r| format!("{:.2}", pick(r)))
    };
    let mut rows = vec![[
        "decoder".to_string(),
        "full rhythm".to_string(),
        "full pitch".to_string(),
        "hard rhythm".to_string(),
        "hard pitch".to_string(),
    ]];
    for d in DecoderKind::ALL {
        if !reports.iter().any(|r| r.decoder == d) {
            continue;
        }
        rows.push([
            d.to_string(),
            cell(d, Subset::Full, SerReport::rhythm_ser),
            cell(d, Subset::Full, SerReport::pitch_ser),
            cell(d, Subset::Hard, SerReport::rhythm_ser),
            cell(d, Subset::Hard, SerReport::pitch_ser),
        ]);
    }
    let widths: Vec<usize> = (0..5).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}
