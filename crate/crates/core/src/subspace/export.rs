use std::io::Write;

use serde::Serialize;

use super::{PartitionTree, SubspaceSummary, TreeParams};
use crate::error::{Error, Result};
use crate::predictors::SplitRule;

#[derive(Serialize)]
struct SplitJson<'a> {
    feature: &'a str,
    rule: &'a SplitRule,
    left: Box<NodeJson<'a>>,
    right: Box<NodeJson<'a>>,
}

#[derive(Serialize)]
struct NodeJson<'a> {
    id: usize,
    depth: usize,
    p_value: Option<f64>,
    summary: &'a SubspaceSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<SplitJson<'a>>,
}

#[derive(Serialize)]
struct TreeJson<'a> {
    features: Vec<&'a str>,
    params: &'a TreeParams,
    n_leaves: usize,
    root: NodeJson<'a>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl PartitionTree {
    fn node_json(&self, id: usize) -> NodeJson<'_> {
        let node = &self.nodes[id];
        NodeJson {
            id,
            depth: node.depth,
            p_value: node.p_value,
            summary: &node.summary,
            split: node.split.as_ref().map(|s| SplitJson {
                feature: &self.features[s.feature].name,
                rule: &s.rule,
                left: Box::new(self.node_json(s.left)),
                right: Box::new(self.node_json(s.right)),
            }),
        }
    }

    /// Nested JSON: split rules, p-values and every node's summary.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(TreeJson {
            features: self.features.iter().map(|f| f.name.as_str()).collect(),
            params: &self.params,
            n_leaves: self.leaves().len(),
            root: self.node_json(0),
        })
        .expect("trees serialize")
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_json_value())?;
        writeln!(w).map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }

    /// One line per leaf, left to right, followed by the feature ranges.
    /// Undefined values are empty cells.
    pub fn write_leaves_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = [
            "leaf",
            "n",
            "came",
            "sd_fme",
            "cov_fme",
            "canlm",
            "nlm_dropped",
            "sd_nlm",
            "cov_nlm",
            "ci_came_lo",
            "ci_came_hi",
            "ci_canlm_lo",
            "ci_canlm_hi",
        ]
        .map(String::from)
        .to_vec();
        header.extend(self.features.iter().map(|f| f.name.clone()));
        out.write_record(&header)?;
        for leaf in self.leaves() {
            let s = &self.nodes[leaf].summary;
            let mut line = vec![
                leaf.to_string(),
                s.n.to_string(),
                s.came.to_string(),
                opt(s.sd_fme),
                opt(s.cov_fme),
                opt(s.canlm),
                s.nlm_dropped.to_string(),
                opt(s.sd_nlm),
                opt(s.cov_nlm),
                opt(s.ci_came.map(|c| c.0)),
                opt(s.ci_came.map(|c| c.1)),
                opt(s.ci_canlm.map(|c| c.0)),
                opt(s.ci_canlm.map(|c| c.1)),
            ];
            line.extend(s.ranges.iter().map(|r| r.to_string()));
            out.write_record(&line)?;
        }
        out.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }
}
