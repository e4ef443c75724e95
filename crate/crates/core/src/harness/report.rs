use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agents::AgentKind;
use crate::error::{Error, Result};

/// Item names of the score ladder rows, starting with the empty episode.
pub const LADDER_ITEMS: [&str; 13] = [
    "None",
    "Log",
    "Plank",
    "Stick",
    "Crafting_Table",
    "Wooden_Pickaxe",
    "Cobblestone",
    "Stone_Pickaxe",
    "Furnace",
    "Iron_Ore",
    "Iron_Ingot",
    "Iron_Pickaxe",
    "Diamond",
];

/// Cumulative score after each ladder item.
pub const SCORE_LADDER: [u32; 13] = [0, 1, 3, 7, 11, 19, 35, 67, 99, 163, 291, 547, 1571];

/// Agent responsible for each ladder row.
pub const LADDER_AGENTS: [AgentKind; 13] = [
    AgentKind::ChopTree,
    AgentKind::ChopTree,
    AgentKind::CraftWoodenPickaxe,
    AgentKind::CraftWoodenPickaxe,
    AgentKind::CraftWoodenPickaxe,
    AgentKind::CraftWoodenPickaxe,
    AgentKind::DigStone,
    AgentKind::CraftStonePickaxe,
    AgentKind::CraftStonePickaxe,
    AgentKind::RandomSearch,
    AgentKind::RandomSearch,
    AgentKind::RandomSearch,
    AgentKind::RandomSearch,
];

/// Score an episode must reach to count as completing each phase.
pub const PHASE_COMPLETION: [u32; 5] = [1, 19, 35, 67, 163];

/// Ladder row of a final score: the largest rung not above it.
pub fn bucket_of(score: f64) -> usize {
    SCORE_LADDER
        .iter()
        .rposition(|&s| f64::from(s) <= score + 1e-9)
        .unwrap_or(0)
}

pub fn bucket_counts(scores: &[f64]) -> [u64; 13] {
    let mut c = [0u64; 13];
    for &s in scores {
        c[bucket_of(s)] += 1;
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MilestoneReport {
    pub episodes: u64,
    pub counts: [u64; 13],
    /// Fraction of all episodes completing each phase.
    pub rates: [f64; 5],
    /// `rates[i] / rates[i - 1]`, with an implicit leading rate of one.
    pub conds: [f64; 5],
    pub mean_score: f64,
}

/// Rates and the mean score from per-rung episode counts over `episodes`
/// runs. Episodes not covered by `counts` are taken to have scored zero.
pub fn compute_rates(counts: &[u64; 13], episodes: u64) -> Result<MilestoneReport> {
    if episodes == 0 {
        return Err(Error::Degenerate("no episodes to report on".into()));
    }
    let total: u64 = counts.iter().sum();
    if total > episodes {
        return Err(Error::Input(format!(
            "{total} bucketed episodes exceed the episode count {episodes}"
        )));
    }
    let n = episodes as f64;
    let mut rates = [0.0; 5];
    let mut conds = [0.0; 5];
    let mut prev = 1.0;
    for (i, &need) in PHASE_COMPLETION.iter().enumerate() {
        let done: u64 = counts
            .iter()
            .zip(SCORE_LADDER)
            .filter(|(_, s)| *s >= need)
            .map(|(c, _)| c)
            .sum();
        rates[i] = done as f64 / n;
        conds[i] = if prev > 0.0 { rates[i] / prev } else { 0.0 };
        prev = rates[i];
    }
    let mass: f64 = counts
        .iter()
        .zip(SCORE_LADDER)
        .map(|(&c, s)| c as f64 * f64::from(s))
        .sum();
    Ok(MilestoneReport {
        episodes,
        counts: *counts,
        rates,
        conds,
        mean_score: mass / n,
    })
}

/// Report over raw episode scores. The mean uses the exact scores.
pub fn report_from_scores(scores: &[f64]) -> Result<MilestoneReport> {
    let mut r = compute_rates(&bucket_counts(scores), scores.len() as u64)?;
    r.mean_score = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(r)
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn phase_index(k: AgentKind) -> usize {
    k.phase() as usize - 1
}

impl MilestoneReport {
    pub fn is_monotone(&self) -> bool {
        self.rates.windows(2).all(|w| w[0] >= w[1])
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| Agent | Item | Score | #Episode | Cond.Rate | Rate |\n");
        s.push_str("|---|---|---:|---:|---:|---:|\n");
        for i in 0..13 {
            let k = LADDER_AGENTS[i];
            let first = i == 0 || LADDER_AGENTS[i - 1] != k;
            let (agent, cond, rate) = if first {
                let p = phase_index(k);
                (
                    k.title().to_string(),
                    pct(self.conds[p]),
                    pct(self.rates[p]),
                )
            } else {
                (String::new(), String::new(), String::new())
            };
            let _ = writeln!(
                s,
                "| {agent} | {} | {} | {} | {cond} | {rate} |",
                LADDER_ITEMS[i], SCORE_LADDER[i], self.counts[i]
            );
        }
        let _ = writeln!(
            s,
            "\nEpisodes: {}. Mean score: {:.3}.",
            self.episodes, self.mean_score
        );
        s
    }

    /// One row per rung plus a closing `All,Mean` row carrying the episode
    /// count and mean score; percentages to one decimal.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("Agent,Item,Score,Episodes,CondRate,Rate\n");
        for i in 0..13 {
            let p = phase_index(LADDER_AGENTS[i]);
            let _ = writeln!(
                s,
                "{},{},{},{},{:.1},{:.1}",
                LADDER_AGENTS[i].title(),
                LADDER_ITEMS[i],
                SCORE_LADDER[i],
                self.counts[i],
                100.0 * self.conds[p],
                100.0 * self.rates[p]
            );
        }
        let _ = writeln!(s, "All,Mean,{:.4},{},,", self.mean_score, self.episodes);
        s
    }

    /// Parses `to_csv` output. Rates come back at the printed precision.
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("report csv: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some("Agent,Item,Score,Episodes,CondRate,Rate") {
            return Err(bad("unexpected header"));
        }
        let mut counts = [0u64; 13];
        let mut rates = [0.0; 5];
        let mut conds = [0.0; 5];
        for i in 0..13 {
            let line = lines.next().ok_or_else(|| bad("too few rows"))?;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 || f[1] != LADDER_ITEMS[i] || f[2] != SCORE_LADDER[i].to_string() {
                return Err(bad(&format!("row {} does not match the ladder", i + 1)));
            }
            counts[i] = f[3].parse().map_err(|_| bad("episode count"))?;
            let p = phase_index(LADDER_AGENTS[i]);
            conds[p] = f[4].parse::<f64>().map_err(|_| bad("cond rate"))? / 100.0;
            rates[p] = f[5].parse::<f64>().map_err(|_| bad("rate"))? / 100.0;
        }
        let last = lines.next().ok_or_else(|| bad("missing summary row"))?;
        let f: Vec<&str> = last.split(',').collect();
        if f.len() != 6 || f[0] != "All" || f[1] != "Mean" {
            return Err(bad("malformed summary row"));
        }
        Ok(Self {
            episodes: f[3].parse().map_err(|_| bad("episode total"))?,
            counts,
            rates,
            conds,
            mean_score: f[2].parse().map_err(|_| bad("mean"))?,
        })
    }
}
