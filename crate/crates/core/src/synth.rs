//! Planted-community dynamic graphs for tests and demos.
//!
//! Users and items carry community ids. User–item links prefer the user's
//! own community with probability `p_in`; user–noise and item–noise links
//! are uniform. Between snapshots each user (and each item's noise links)
//! is resampled with probability `drift`, so `drift = 0` repeats the first
//! snapshot verbatim.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{seeded_rng, SeededRng};

pub const USER: &str = "U";
pub const ITEM: &str = "I";
pub const NOISE: &str = "N";
pub const USER_ITEM: &str = "ui";
pub const USER_NOISE: &str = "un";
pub const ITEM_NOISE: &str = "in";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub noise_nodes: usize,
    pub snapshots: usize,
    pub communities: usize,
    /// Per-step probability that a node's links are redrawn.
    pub drift: f64,
    /// Per-step probability that a user moves to another community.
    pub membership_drift: f64,
    /// Probability that a user–item link stays inside the community.
    pub p_in: f64,
    pub items_per_user: usize,
    pub noise_per_user: usize,
    pub noise_per_item: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 200,
            items: 100,
            noise_nodes: 40,
            snapshots: 4,
            communities: 2,
            drift: 0.2,
            membership_drift: 0.0,
            p_in: 0.9,
            items_per_user: 8,
            noise_per_user: 4,
            noise_per_item: 4,
            seed: 7,
        }
    }
}

/// Views whose proximities follow the communities, and views that do not.
pub const INFORMATIVE_VIEW: &str = "U-I-U";
pub const NOISE_VIEW: &str = "U-N-U";
pub const ITEM_INFORMATIVE_VIEW: &str = "I-U-I";
pub const ITEM_NOISE_VIEW: &str = "I-N-I";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub schema: String,
    pub edges: String,
    /// `user<TAB>community` at the last snapshot.
    pub labels: String,
    /// Community per user at the last snapshot.
    pub user_community: Vec<usize>,
    pub item_community: Vec<usize>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("synthetic spec: {m}")));
        if self.communities < 2 {
            return bad("at least two communities are needed".into());
        }
        if self.communities > self.users || self.communities > self.items {
            return bad(format!(
                "{} communities for {} users and {} items",
                self.communities, self.users, self.items
            ));
        }
        for (name, p) in [("drift", self.drift), ("membership_drift", self.membership_drift), ("p_in", self.p_in)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.snapshots == 0 {
            return bad("at least one snapshot is needed".into());
        }
        let per_comm = self.items / self.communities;
        if self.items_per_user > per_comm {
            return bad(format!(
                "items_per_user {} exceeds the smallest community's {per_comm} items",
                self.items_per_user
            ));
        }
        if self.noise_per_user > self.noise_nodes || self.noise_per_item > self.noise_nodes {
            return bad("more noise links per node than noise nodes".into());
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<SyntheticData> {
        self.validate()?;
        let c = self.communities;
        let mut rng = seeded_rng(self.seed);
        let mut user_comm: Vec<usize> = (0..self.users).map(|u| u % c).collect();
        let item_comm: Vec<usize> = (0..self.items).map(|i| i % c).collect();
        let members: Vec<Vec<usize>> = (0..c)
            .map(|k| (0..self.items).filter(|&i| item_comm[i] == k).collect())
            .collect();

        let draw_items = |rng: &mut SeededRng, comm: usize| -> Vec<usize> {
            // Per link: own community with probability p_in, else another
            // community; distinct items overall.
            let mut chosen = Vec::with_capacity(self.items_per_user);
            while chosen.len() < self.items_per_user {
                let k = if rng.random_bool(self.p_in) {
                    comm
                } else {
                    let other = rng.random_range(0..c - 1);
                    if other >= comm {
                        other + 1
                    } else {
                        other
                    }
                };
                let pool = &members[k];
                let item = pool[rng.random_range(0..pool.len())];
                if !chosen.contains(&item) {
                    chosen.push(item);
                }
            }
            chosen.sort_unstable();
            chosen
        };
        let draw_noise = |rng: &mut SeededRng, k: usize| -> Vec<usize> {
            let mut v = sample(rng, self.noise_nodes, k).into_vec();
            v.sort_unstable();
            v
        };

        let mut ui: Vec<Vec<usize>> = user_comm.iter().map(|&k| draw_items(&mut rng, k)).collect();
        let mut un: Vec<Vec<usize>> = (0..self.users).map(|_| draw_noise(&mut rng, self.noise_per_user)).collect();
        let mut inn: Vec<Vec<usize>> = (0..self.items).map(|_| draw_noise(&mut rng, self.noise_per_item)).collect();

        let mut edges = String::new();
        for t in 1..=self.snapshots {
            if t > 1 {
                for u in 0..self.users {
                    if self.membership_drift > 0.0 && rng.random_bool(self.membership_drift) {
                        let other = rng.random_range(0..c - 1);
                        user_comm[u] = if other >= user_comm[u] { other + 1 } else { other };
                    }
                    if self.drift > 0.0 && rng.random_bool(self.drift) {
                        ui[u] = draw_items(&mut rng, user_comm[u]);
                        un[u] = draw_noise(&mut rng, self.noise_per_user);
                    }
                }
                for links in inn.iter_mut() {
                    if self.drift > 0.0 && rng.random_bool(self.drift) {
                        *links = draw_noise(&mut rng, self.noise_per_item);
                    }
                }
            }
            writeln!(edges, "{t}").unwrap();
            for (u, items) in ui.iter().enumerate() {
                for i in items {
                    writeln!(edges, "{t}\t{USER_ITEM}\tu{u}\ti{i}").unwrap();
                }
            }
            for (u, ns) in un.iter().enumerate() {
                for n in ns {
                    writeln!(edges, "{t}\t{USER_NOISE}\tu{u}\tn{n}").unwrap();
                }
            }
            for (i, ns) in inn.iter().enumerate() {
                for n in ns {
                    writeln!(edges, "{t}\t{ITEM_NOISE}\ti{i}\tn{n}").unwrap();
                }
            }
        }
        let schema = format!(
            "node {USER}\nnode {ITEM}\nnode {NOISE}\nedge {USER_ITEM} {USER} {ITEM}\nedge {USER_NOISE} {USER} {NOISE}\nedge {ITEM_NOISE} {ITEM} {NOISE}\n"
        );
        let mut labels = String::new();
        for (u, k) in user_comm.iter().enumerate() {
            writeln!(labels, "u{u}\tc{k}").unwrap();
        }
        Ok(SyntheticData {
            schema,
            edges,
            labels,
            user_community: user_comm,
            item_community: item_comm,
        })
    }
}

impl SyntheticData {
    /// Writes `schema.txt`, `edges.tsv` and `labels.tsv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("schema.txt", &self.schema), ("edges.tsv", &self.edges), ("labels.tsv", &self.labels)] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_snapshots, Schema};

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            users: 30,
            items: 20,
            noise_nodes: 10,
            snapshots: 3,
            items_per_user: 4,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_and_parseable() {
        let a = small().generate().unwrap();
        assert_eq!(a, small().generate().unwrap());
        let schema = Schema::parse(&a.schema, Path::new("s")).unwrap();
        let s = parse_snapshots(&schema, &a.edges, Path::new("e")).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.universe().count(0), 30);
    }

    #[test]
    fn zero_drift_repeats() {
        let spec = SyntheticSpec { drift: 0.0, ..small() };
        let d = spec.generate().unwrap();
        let schema = Schema::parse(&d.schema, Path::new("s")).unwrap();
        let s = parse_snapshots(&schema, &d.edges, Path::new("e")).unwrap();
        for t in 2..=3 {
            for e in 0..3 {
                assert_eq!(s.adjacency(t, e), s.adjacency(1, e));
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SyntheticSpec { communities: 1, ..small() }.generate().is_err());
        assert!(SyntheticSpec { communities: 40, ..small() }.generate().is_err());
        assert!(SyntheticSpec { drift: 1.5, ..small() }.generate().is_err());
        assert!(SyntheticSpec { items_per_user: 15, ..small() }.generate().is_err());
    }
}
