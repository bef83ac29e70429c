//! Size rows shared by `inspect` and `bench`.

use anyhow::Result;
use edicr_core::binning::build_all_bins;
use edicr_core::{Evaluator, Instance};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeRow {
    pub instance: String,
    /// Terminal histories per agent.
    pub terminals: Vec<usize>,
    /// Non-terminal histories per agent, root included.
    pub non_terminals: Vec<usize>,
    pub z_edi: usize,
    /// Only defined for two agents.
    pub z_dec: Option<usize>,
    /// Non-policy constraints of the binned program.
    pub c_edi: usize,
    /// Non-policy constraints of the DEC-MDP program, with and without the
    /// counting row.
    pub c_dec: Option<usize>,
    pub c_dec_without_counting: Option<usize>,
    pub policy_constraints: usize,
}

impl SizeRow {
    pub fn compute(name: &str, inst: &Instance) -> Result<Self> {
        let ev = Evaluator::new(inst)?;
        let n = ev.num_agents();
        let terminals: Vec<usize> = ev.trees().iter().map(|t| t.num_terminals()).collect();
        let non_terminals = ev.trees().iter().map(|t| t.num_nodes() - t.num_terminals()).collect();
        let z_edi: usize = build_all_bins(&ev)?.iter().map(|s| s.z_count()).sum();
        let sum_z: usize = terminals.iter().sum();
        let (z_dec, c_dec, c_dec_without_counting) = if n == 2 {
            (Some(terminals[0] * terminals[1]), Some(sum_z + 1), Some(sum_z))
        } else {
            (None, None, None)
        };
        Ok(Self {
            instance: name.to_string(),
            policy_constraints: ev.trees().iter().map(|t| t.decisions().len()).sum(),
            c_edi: sum_z + (n - 1) * z_edi,
            terminals,
            non_terminals,
            z_edi,
            z_dec,
            c_dec,
            c_dec_without_counting,
        })
    }

    pub fn header(n: usize) -> String {
        let mut cols = vec!["instance".to_string()];
        cols.extend((0..n).map(|g| format!("Z_{g}")));
        cols.extend(["z_EDI", "z_DEC", "C_EDI", "C_DEC", "C_DEC_nocount"].map(String::from));
        cols.extend((0..n).map(|g| format!("N_{g}")));
        cols.push("policy_rows".into());
        cols.join("\t")
    }

    pub fn tsv(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
        let mut cols = vec![self.instance.clone()];
        cols.extend(self.terminals.iter().map(usize::to_string));
        cols.extend([
            self.z_edi.to_string(),
            opt(self.z_dec),
            self.c_edi.to_string(),
            opt(self.c_dec),
            opt(self.c_dec_without_counting),
        ]);
        cols.extend(self.non_terminals.iter().map(usize::to_string));
        cols.push(self.policy_constraints.to_string());
        cols.join("\t")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use edicr_core::fixtures;

    #[test]
    fn tiny2_row() {
        let row = SizeRow::compute("tiny2", &fixtures::tiny2()).unwrap();
        assert_eq!(row.tsv(), "tiny2\t8\t8\t32\t64\t48\t17\t16\t3\t3\t10");
        assert_eq!(SizeRow::header(2).split('\t').count(), row.tsv().split('\t').count());
    }
}
