//! Clip-level scoring and grouped accuracy tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dsp::SEGMENTS_PER_CLIP;
use crate::error::{Error, Result};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean of exactly eight segment score vectors and its argmax.
pub fn aggregate_clip(segment_scores: &[Vec<f64>]) -> Result<(Vec<f64>, usize)> {
    if segment_scores.len() != SEGMENTS_PER_CLIP {
        return Err(Error::shape(
            format!("{SEGMENTS_PER_CLIP} segment score vectors"),
            format!("{}", segment_scores.len()),
        ));
    }
    let k = segment_scores[0].len();
    if k == 0 || segment_scores.iter().any(|s| s.len() != k) {
        return Err(Error::arg("segment_scores", "score vectors must share a non-zero length"));
    }
    let mut mean = vec![0.0; k];
    for s in segment_scores {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= SEGMENTS_PER_CLIP as f64);
    let pred = argmax(&mean);
    Ok((mean, pred))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipPrediction {
    pub clip_id: String,
    pub scores: Vec<f64>,
    pub predicted: usize,
    pub true_class: usize,
    pub device: String,
    pub city: String,
}

impl ClipPrediction {
    pub fn from_segments(
        clip_id: impl Into<String>,
        segment_scores: &[Vec<f64>],
        true_class: usize,
        device: impl Into<String>,
        city: impl Into<String>,
    ) -> Result<Self> {
        let (scores, predicted) = aggregate_clip(segment_scores)?;
        Ok(Self {
            clip_id: clip_id.into(),
            scores,
            predicted,
            true_class,
            device: device.into(),
            city: city.into(),
        })
    }

    pub fn is_correct(&self) -> bool {
        self.predicted == self.true_class
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Device,
    City,
}

impl GroupKey {
    pub fn of<'a>(&self, p: &'a ClipPrediction) -> &'a str {
        match self {
            GroupKey::Device => &p.device,
            GroupKey::City => &p.city,
        }
    }
}

impl std::str::FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "device" => Ok(GroupKey::Device),
            "city" => Ok(GroupKey::City),
            other => Err(Error::arg("group", format!("expected device or city, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub n: usize,
    pub correct: usize,
}

impl Tally {
    fn add(&mut self, correct: bool) {
        self.n += 1;
        self.correct += correct as usize;
    }

    /// `correct / n`, or `None` for an empty partition.
    pub fn accuracy(&self) -> Option<f64> {
        (self.n > 0).then(|| self.correct as f64 / self.n as f64)
    }

    /// Like [`Self::accuracy`] but an empty partition is an error.
    pub fn try_accuracy(&self, what: &str) -> Result<f64> {
        self.accuracy()
            .ok_or_else(|| Error::Undefined(format!("accuracy of empty partition {what}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedAccuracy {
    pub key: GroupKey,
    pub seen: Tally,
    pub unseen: Tally,
    pub overall: Tally,
    /// Per group value, with whether it was seen in training.
    pub per_group: BTreeMap<String, (bool, Tally)>,
}

/// Clip accuracy split by whether each clip's group occurs in `seen`.
pub fn grouped_accuracy(
    preds: &[ClipPrediction],
    key: GroupKey,
    seen: &BTreeSet<String>,
) -> Result<GroupedAccuracy> {
    let mut out = GroupedAccuracy {
        key,
        seen: Tally::default(),
        unseen: Tally::default(),
        overall: Tally::default(),
        per_group: BTreeMap::new(),
    };
    for p in preds {
        let g = key.of(p);
        if g.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "clip {} has no {key:?} metadata",
                p.clip_id
            )));
        }
        let is_seen = seen.contains(g);
        let ok = p.is_correct();
        if is_seen {
            out.seen.add(ok);
        } else {
            out.unseen.add(ok);
        }
        out.overall.add(ok);
        out.per_group
            .entry(g.to_string())
            .or_insert((is_seen, Tally::default()))
            .1
            .add(ok);
    }
    Ok(out)
}

fn fmt_acc(t: &Tally) -> String {
    t.accuracy().map_or_else(|| "undefined".to_string(), |a| format!("{a:.6}"))
}

fn partition(seen: bool) -> &'static str {
    if seen {
        "seen"
    } else {
        "unseen"
    }
}

/// `group,partition,n,correct,accuracy`: one row per group, then the
/// pooled `all` rows in seen, unseen, overall order.
pub fn write_accuracy_csv(acc: &GroupedAccuracy, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "group,partition,n,correct,accuracy")?;
    for (g, (seen, t)) in &acc.per_group {
        writeln!(w, "{g},{},{},{},{}", partition(*seen), t.n, t.correct, fmt_acc(t))?;
    }
    for (name, t) in [("seen", &acc.seen), ("unseen", &acc.unseen), ("overall", &acc.overall)] {
        writeln!(w, "all,{name},{},{},{}", t.n, t.correct, fmt_acc(t))?;
    }
    Ok(())
}

/// Seen / unseen / overall percentages as a small text table.
pub fn format_table(rows: &[(&str, &GroupedAccuracy)]) -> String {
    let pct = |t: &Tally| t.accuracy().map_or_else(|| "n/a".to_string(), |a| format!("{:.1}%", 100.0 * a));
    let label = match rows.first().map(|r| r.1.key) {
        Some(GroupKey::City) => "City",
        _ => "Device",
    };
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>12}  {:>14}  {:>8}",
        "System",
        format!("Seen {label}"),
        format!("Unseen {label}"),
        "Overall"
    );
    for (name, acc) in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>12}  {:>14}  {:>8}",
            name,
            pct(&acc.seen),
            pct(&acc.unseen),
            pct(&acc.overall)
        );
    }
    s
}

/// Counts with rows indexed by true class and columns by prediction.
pub fn confusion_matrix(preds: &[ClipPrediction], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for p in preds {
        if p.true_class >= n_classes || p.predicted >= n_classes {
            return Err(Error::arg(
                "preds",
                format!("clip {} has a class outside 0..{n_classes}", p.clip_id),
            ));
        }
        m[p.true_class][p.predicted] += 1;
    }
    Ok(m)
}

pub fn write_confusion_csv(m: &[Vec<usize>], classes: &[&str], mut w: impl Write) -> std::io::Result<()> {
    write!(w, "true\\predicted")?;
    for c in classes {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (row, name) in m.iter().zip(classes) {
        write!(w, "{name}")?;
        for v in row {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(t: usize, p: usize, device: &str) -> ClipPrediction {
        ClipPrediction {
            clip_id: format!("{device}-{t}-{p}"),
            scores: vec![],
            predicted: p,
            true_class: t,
            device: device.into(),
            city: "vienna".into(),
        }
    }

    #[test]
    fn ties_pick_the_lowest_index() {
        let segs = vec![vec![0.1, 0.7, 0.7, 0.2]; 8];
        let (mean, pred) = aggregate_clip(&segs).unwrap();
        assert!(mean.iter().zip(&segs[0]).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(pred, 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn wrong_segment_count_is_an_error() {
        assert!(aggregate_clip(&vec![vec![0.5; 10]; 7]).is_err());
        assert!(aggregate_clip(&[]).is_err());
    }

    #[test]
    fn hand_counted_partitions() {
        let preds = [pred(0, 0, "a"), pred(1, 1, "b"), pred(2, 0, "a"), pred(3, 4, "s4")];
        let seen: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let acc = grouped_accuracy(&preds, GroupKey::Device, &seen).unwrap();
        assert!((acc.seen.accuracy().unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(acc.unseen.accuracy(), Some(0.0));
        assert_eq!(acc.overall.accuracy(), Some(0.5));
        assert_eq!(acc.per_group["a"], (true, Tally { n: 2, correct: 1 }));
    }

    #[test]
    fn empty_partition_is_undefined() {
        let preds = [pred(0, 0, "a")];
        let seen: BTreeSet<String> = ["a".to_string()].into();
        let acc = grouped_accuracy(&preds, GroupKey::Device, &seen).unwrap();
        assert_eq!(acc.unseen.accuracy(), None);
        assert!(matches!(acc.unseen.try_accuracy("unseen"), Err(Error::Undefined(_))));
        let mut buf = Vec::new();
        write_accuracy_csv(&acc, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("all,unseen,0,0,undefined"));
        assert!(text.starts_with("group,partition,n,correct,accuracy\na,seen,1,1,1.000000\n"));
    }

    #[test]
    fn missing_group_metadata_is_an_error() {
        let preds = [pred(0, 0, "")];
        assert!(grouped_accuracy(&preds, GroupKey::Device, &BTreeSet::new()).is_err());
    }

    #[test]
    fn confusion_counts() {
        let m = confusion_matrix(&[pred(2, 5, "a")], 10).unwrap();
        assert_eq!(m[2][5], 1);
        assert_eq!(m.iter().flatten().sum::<usize>(), 1);
        let diag = confusion_matrix(&[pred(0, 0, "a"), pred(3, 3, "a")], 4).unwrap();
        assert_eq!(diag[0][0] + diag[3][3], 2);
        assert!(confusion_matrix(&[pred(0, 12, "a")], 10).is_err());
    }

    #[test]
    fn table_column_order() {
        let preds = [pred(0, 0, "a"), pred(1, 1, "s4")];
        let seen: BTreeSet<String> = ["a".to_string()].into();
        let acc = grouped_accuracy(&preds, GroupKey::Device, &seen).unwrap();
        let t = format_table(&[("baseline", &acc)]);
        let header = t.lines().next().unwrap();
        let (s, u, o) = (
            header.find("Seen").unwrap(),
            header.find("Unseen").unwrap(),
            header.find("Overall").unwrap(),
        );
        assert!(s < u && u < o);
        assert!(t.contains("100.0%"));
    }
}
