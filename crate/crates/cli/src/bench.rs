//! Batch generation and group means for `bench`.
//!
//! Params file:
//! `{"groups": [{"name": "G1", "params": {...}, "seeds": [1, 2]}, ...]}`.
//! `params` takes the rover generator fields; instead of `seeds`, `count`
//! runs `params.seed .. params.seed + count`.

use anyhow::{bail, Result};
use edicr_core::{generate_rovers, RoverParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sizes::SizeRow;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Group {
    pub name: String,
    #[serde(default)]
    pub params: RoverParams,
    pub seeds: Option<Vec<u64>>,
    pub count: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchFile {
    pub groups: Vec<Group>,
}

impl BenchFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        let mut names = std::collections::BTreeSet::new();
        for g in &file.groups {
            if !names.insert(g.name.as_str()) {
                bail!("duplicate group name `{}`", g.name);
            }
            if g.seeds.is_some() && g.count.is_some() {
                bail!("group `{}`: give either seeds or count, not both", g.name);
            }
            g.params.validate()?;
        }
        Ok(file)
    }
}

impl Group {
    fn seeds(&self) -> Vec<u64> {
        match (&self.seeds, self.count) {
            (Some(s), _) => s.clone(),
            (None, Some(c)) => (0..c).map(|i| self.params.seed + i).collect(),
            (None, None) => vec![self.params.seed],
        }
    }
}

#[derive(Debug, Serialize)]
pub struct GroupMeans {
    pub group: String,
    pub instances: usize,
    pub terminals: Vec<f64>,
    pub z_edi: f64,
    pub z_dec: Option<f64>,
    pub c_edi: f64,
    pub c_dec: Option<f64>,
    /// Mean z_EDI over mean z_DEC.
    pub ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub instances: Vec<SizeRow>,
    pub groups: Vec<GroupMeans>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

fn means(name: &str, rows: &[&SizeRow]) -> GroupMeans {
    let n_agents = rows[0].terminals.len();
    let opt = |f: fn(&SizeRow) -> Option<usize>| -> Option<f64> {
        rows.iter().map(|r| f(r).map(|v| v as f64)).collect::<Option<Vec<_>>>().map(|v| mean(v.into_iter()))
    };
    let z_edi = mean(rows.iter().map(|r| r.z_edi as f64));
    let z_dec = opt(|r| r.z_dec);
    GroupMeans {
        group: name.to_string(),
        instances: rows.len(),
        terminals: (0..n_agents).map(|g| mean(rows.iter().map(|r| r.terminals[g] as f64))).collect(),
        z_edi,
        z_dec,
        c_edi: mean(rows.iter().map(|r| r.c_edi as f64)),
        c_dec: opt(|r| r.c_dec),
        ratio: z_dec.map(|d| z_edi / d),
    }
}

pub fn run(file: &BenchFile) -> Result<BenchReport> {
    let jobs: Vec<(usize, String, RoverParams)> = file
        .groups
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| {
            g.seeds().into_iter().map(move |seed| {
                let params = RoverParams { seed, ..g.params.clone() };
                (gi, format!("{}/seed-{seed:06}", g.name), params)
            })
        })
        .collect();
    let mut rows: Vec<(usize, SizeRow)> = jobs
        .par_iter()
        .map(|(gi, name, params)| Ok((*gi, SizeRow::compute(name, &generate_rovers(params)?)?)))
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.1.instance.cmp(&b.1.instance));
    let groups = file
        .groups
        .iter()
        .enumerate()
        .filter_map(|(gi, g)| {
            let members: Vec<&SizeRow> = rows.iter().filter(|r| r.0 == gi).map(|r| &r.1).collect();
            (!members.is_empty()).then(|| means(&g.name, &members))
        })
        .collect();
    Ok(BenchReport {
        instances: rows.into_iter().map(|r| r.1).collect(),
        groups,
    })
}

impl BenchReport {
    pub fn tsv(&self, per_instance: bool) -> String {
        let mut out = String::new();
        if per_instance {
            let n = self.instances.iter().map(|r| r.terminals.len()).max().unwrap_or(2);
            out += &SizeRow::header(n);
            out.push('\n');
            for r in &self.instances {
                out += &r.tsv();
                out.push('\n');
            }
            out.push('\n');
        }
        let n = self.groups.iter().map(|g| g.terminals.len()).max().unwrap_or(2);
        let mut head = vec!["group".to_string(), "instances".to_string()];
        head.extend((0..n).map(|g| format!("Z_{g}")));
        head.extend(["z_EDI", "z_DEC", "C_EDI", "C_DEC", "z_EDI/z_DEC"].map(String::from));
        out += &head.join("\t");
        out.push('\n');
        let f = |v: f64| format!("{v:.2}");
        let o = |v: Option<f64>, d: usize| v.map_or("-".to_string(), |v| format!("{v:.d$}"));
        for g in &self.groups {
            let mut cols = vec![g.group.clone(), g.instances.to_string()];
            cols.extend(g.terminals.iter().map(|&v| f(v)));
            cols.extend([f(g.z_edi), o(g.z_dec, 2), f(g.c_edi), o(g.c_dec, 2), o(g.ratio, 4)]);
            out += &cols.join("\t");
            out.push('\n');
        }
        out
    }
}
