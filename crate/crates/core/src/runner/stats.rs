//! Ordering logs and action-by-position histograms.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::grid::Action;

/// One agent at one timestep: its distribution and one strict and one
/// sampled ordering drawn from it (action indices, most preferred first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: usize,
    pub agent: usize,
    pub at_goal: bool,
    pub probs: [f64; 5],
    pub strict: [usize; 5],
    pub sampled: [usize; 5],
}

/// JSON lines, one entry per line.
pub fn write_log<W: Write>(entries: &[LogEntry], mut w: W) -> io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_log<R: BufRead>(r: R) -> io::Result<Vec<LogEntry>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HistogramKey {
    pub sampled: bool,
    pub at_goal: bool,
}

impl HistogramKey {
    pub fn mode_label(&self) -> &'static str {
        if self.sampled {
            "sampled"
        } else {
            "strict"
        }
    }
}

/// `counts[a][k]`: how often action `a` sat at preference position `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingHistogram {
    pub key: HistogramKey,
    pub counts: [[u64; 5]; 5],
    pub total: u64,
}

impl OrderingHistogram {
    pub fn matrix(&self) -> [[f64; 5]; 5] {
        let n = self.total.max(1) as f64;
        self.counts.map(|row| row.map(|c| c as f64 / n))
    }

    /// Largest cell-wise difference between two matrices.
    pub fn max_abs_diff(&self, other: &OrderingHistogram) -> f64 {
        let (a, b) = (self.matrix(), other.matrix());
        (0..5)
            .flat_map(|i| (0..5).map(move |k| (i, k)))
            .map(|(i, k)| (a[i][k] - b[i][k]).abs())
            .fold(0.0, f64::max)
    }
}

/// Four histograms: strict and sampled orderings, each split by whether
/// the agent stood on its goal. Groups without entries are omitted.
pub fn ordering_histogram(entries: &[LogEntry]) -> Vec<OrderingHistogram> {
    let mut out = Vec::new();
    for sampled in [false, true] {
        for at_goal in [false, true] {
            let key = HistogramKey { sampled, at_goal };
            let mut h = OrderingHistogram {
                key,
                counts: [[0; 5]; 5],
                total: 0,
            };
            for e in entries.iter().filter(|e| e.at_goal == at_goal) {
                let ord = if sampled { &e.sampled } else { &e.strict };
                for (k, &a) in ord.iter().enumerate() {
                    h.counts[a][k] += 1;
                }
                h.total += 1;
            }
            if h.total > 0 {
                out.push(h);
            }
        }
    }
    out
}

/// CSV with one row per (mode, at_goal, action) and the five positional
/// frequencies.
pub fn histogram_csv(hists: &[OrderingHistogram]) -> String {
    let mut s = String::from("mode,at_goal,action,samples,p1,p2,p3,p4,p5\n");
    for h in hists {
        let m = h.matrix();
        for (a, row) in m.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{}",
                h.key.mode_label(),
                h.key.at_goal,
                Action::ALL[a],
                h.total
            ));
            for v in row {
                s.push_str(&format!(",{v:.6}"));
            }
            s.push('\n');
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(at_goal: bool, strict: [usize; 5], sampled: [usize; 5]) -> LogEntry {
        LogEntry {
            t: 0,
            agent: 0,
            at_goal,
            probs: [0.2; 5],
            strict,
            sampled,
        }
    }

    #[test]
    fn identity_orderings_give_identity_matrix() {
        let e = vec![entry(false, [0, 1, 2, 3, 4], [0, 1, 2, 3, 4]); 7];
        let h = ordering_histogram(&e);
        assert_eq!(h.len(), 2);
        for hist in &h {
            let m = hist.matrix();
            for (i, row) in m.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    assert_eq!(*v, if i == k { 1.0 } else { 0.0 });
                }
            }
        }
        assert_eq!(h[0].max_abs_diff(&h[1]), 0.0);
    }

    #[test]
    fn log_round_trip() {
        let e = vec![entry(true, [4, 3, 2, 1, 0], [0, 2, 1, 4, 3]), entry(false, [1, 0, 2, 3, 4], [1, 0, 2, 3, 4])];
        let mut buf = Vec::new();
        write_log(&e, &mut buf).unwrap();
        assert_eq!(read_log(&buf[..]).unwrap(), e);
        assert!(read_log(&b"{nope}\n"[..]).is_err());
        let csv = histogram_csv(&ordering_histogram(&e));
        assert_eq!(csv.lines().count(), 1 + 4 * 5);
    }
}
