//! Per-epoch training metrics as `round,epoch,split,metric,value` CSV.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const HEADER: &str = "round,epoch,split,metric,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    SourceTrain,
    TargetTest,
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Accuracy,
    LossCeSrc,
    LossCeTgt,
    LossSd,
    DescriptorVariance,
}

macro_rules! names {
    ($ty:ty, $($v:path => $s:literal),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($v => $s),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($v),)+
                    other => Err(Error::Validation(format!(concat!("unknown ", stringify!($ty), " {:?}"), other))),
                }
            }
        }
    };
}

names!(Split, Split::SourceTrain => "source_train", Split::TargetTest => "target_test", Split::Pseudo => "pseudo");
names!(
    Metric,
    Metric::Accuracy => "accuracy",
    Metric::LossCeSrc => "loss_ce_src",
    Metric::LossCeTgt => "loss_ce_tgt",
    Metric::LossSd => "loss_sd",
    Metric::DescriptorVariance => "descriptor_variance",
);

/// One row. Round 0 is the distillation step; self-training rounds count
/// from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub round: usize,
    pub epoch: usize,
    pub split: Split,
    pub metric: Metric,
    pub value: f64,
}

pub fn format_csv(records: &[MetricRecord]) -> String {
    let mut s = String::with_capacity(32 * (records.len() + 1));
    s.push_str(HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!("{},{},{},{},{}\n", r.round, r.epoch, r.split, r.metric, r.value));
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == HEADER => {}
        Some(_) => return Err(Error::format(0, format!("metrics header must be {HEADER:?}"))),
        None => return Err(Error::format(0, "empty metrics file")),
    }
    let mut offset = HEADER.len() + 1;
    let mut out = Vec::new();
    for line in lines {
        let start = offset;
        offset += line.len() + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::format(start, format!("expected 5 fields, got {}", f.len())));
        }
        let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| Error::format(start, format!("bad {what} {s:?}")));
        let value: f64 = f[4].parse().map_err(|_| Error::format(start, format!("bad value {:?}", f[4])))?;
        out.push(MetricRecord {
            round: int(f[0], "round")?,
            epoch: int(f[1], "epoch")?,
            split: f[2].parse()?,
            metric: f[3].parse()?,
            value,
        });
    }
    Ok(out)
}
