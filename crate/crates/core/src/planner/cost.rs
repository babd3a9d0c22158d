//! Node-level cost formulas.
//!
//! Every node's total cost is a structural part (how children's costs
//! combine, e.g. a nested loop re-runs its inner side per outer row) plus an
//! exclusive part that only depends on the node's own features. The cost
//! hook may replace the exclusive part.

use serde::{Deserialize, Serialize};

use super::NodeType;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConstants {
    pub seq_page_cost: f64,
    pub cpu_tuple_cost: f64,
    pub cpu_operator_cost: f64,
    pub index_page_cost: f64,
    pub hash_build_cost_per_row: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        CostConstants {
            seq_page_cost: 1.0,
            cpu_tuple_cost: 0.01,
            cpu_operator_cost: 0.0025,
            index_page_cost: 0.5,
            hash_build_cost_per_row: 0.02,
        }
    }
}

impl CostConstants {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("seq_page_cost", self.seq_page_cost),
            ("cpu_tuple_cost", self.cpu_tuple_cost),
            ("cpu_operator_cost", self.cpu_operator_cost),
            ("index_page_cost", self.index_page_cost),
            ("hash_build_cost_per_row", self.hash_build_cost_per_row),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Inputs to a node's cost. Also the COST task payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostFeatures {
    pub node_type: NodeType,
    pub rows_in: f64,
    pub rows_out: f64,
    pub pages: f64,
    pub qual_count: f64,
    pub outer_rows: f64,
    pub inner_rows: f64,
}

impl CostFeatures {
    pub fn scan(
        node_type: NodeType,
        rows_in: f64,
        rows_out: f64,
        pages: f64,
        qual_count: usize,
    ) -> Self {
        CostFeatures {
            node_type,
            rows_in,
            rows_out,
            pages,
            qual_count: qual_count as f64,
            outer_rows: 0.0,
            inner_rows: 0.0,
        }
    }

    pub fn join(
        node_type: NodeType,
        outer_rows: f64,
        inner_rows: f64,
        rows_out: f64,
        qual_count: usize,
    ) -> Self {
        CostFeatures {
            node_type,
            rows_in: outer_rows + inner_rows,
            rows_out,
            pages: 0.0,
            qual_count: qual_count as f64,
            outer_rows,
            inner_rows,
        }
    }
}

/// Total costs of the children feeding a node (zero for scans).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChildCosts {
    pub outer: f64,
    pub inner: f64,
}

/// The node's own work, excluding its inputs.
pub fn exclusive_cost(c: &CostConstants, f: &CostFeatures) -> f64 {
    match f.node_type {
        NodeType::SeqScan => {
            f.pages * c.seq_page_cost
                + f.rows_in * c.cpu_tuple_cost
                + f.rows_in * f.qual_count * c.cpu_operator_cost
        }
        NodeType::IndexScan => {
            f.rows_in.max(2.0).log2() * c.index_page_cost + f.rows_out * c.cpu_tuple_cost
        }
        NodeType::NestLoopJoin => {
            f.outer_rows * f.inner_rows * c.cpu_operator_cost + f.rows_out * c.cpu_tuple_cost
        }
        NodeType::HashJoin => {
            f.inner_rows * c.hash_build_cost_per_row
                + f.outer_rows * c.cpu_operator_cost
                + f.rows_out * c.cpu_tuple_cost
        }
    }
}

/// How the children's costs enter the node's total.
pub fn structural_cost(node_type: NodeType, f: &CostFeatures, children: ChildCosts) -> f64 {
    match node_type {
        NodeType::SeqScan | NodeType::IndexScan => 0.0,
        NodeType::NestLoopJoin => children.outer + f.outer_rows * children.inner,
        NodeType::HashJoin => children.inner + children.outer,
    }
}

/// Builtin total cost of a node.
pub fn cost_node(c: &CostConstants, f: &CostFeatures, children: ChildCosts) -> f64 {
    structural_cost(f.node_type, f, children) + exclusive_cost(c, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    const C: CostConstants = CostConstants {
        seq_page_cost: 1.0,
        cpu_tuple_cost: 0.01,
        cpu_operator_cost: 0.0025,
        index_page_cost: 0.5,
        hash_build_cost_per_row: 0.02,
    };

    #[test]
    fn seq_scan_of_one_page() {
        let f = CostFeatures::scan(NodeType::SeqScan, 100.0, 100.0, 1.0, 0);
        assert!((cost_node(&C, &f, ChildCosts::default()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_features_hit_the_floor() {
        for t in [
            NodeType::SeqScan,
            NodeType::NestLoopJoin,
            NodeType::HashJoin,
        ] {
            let f = CostFeatures::scan(t, 0.0, 0.0, 0.0, 0);
            assert_eq!(cost_node(&C, &f, ChildCosts::default()), 0.0);
        }
        // log2(max(0, 2)) * index_page_cost
        let f = CostFeatures::scan(NodeType::IndexScan, 0.0, 0.0, 0.0, 0);
        assert_eq!(cost_node(&C, &f, ChildCosts::default()), 0.5);
    }

    #[test]
    fn hand_evaluated_joins() {
        let children = ChildCosts {
            outer: 10.0,
            inner: 2.0,
        };
        let nl = CostFeatures::join(NodeType::NestLoopJoin, 100.0, 50.0, 20.0, 1);
        // 10 + 100*2 + 100*50*0.0025 + 20*0.01
        assert!((cost_node(&C, &nl, children) - 222.7).abs() < 1e-9);
        let hj = CostFeatures::join(NodeType::HashJoin, 100.0, 50.0, 20.0, 1);
        // 2 + 10 + 50*0.02 + 100*0.0025 + 20*0.01
        assert!((cost_node(&C, &hj, children) - 13.45).abs() < 1e-9);
    }

    #[test]
    fn nestloop_hash_crossover() {
        // n outer rows, n inner rows, n output rows, inner side costing k:
        // NL - HJ = n*k + 0.0025 n^2 - k - 0.0225 n
        let cmp = |n: f64, inner_cost: f64| {
            let ch = ChildCosts {
                outer: 1.0,
                inner: inner_cost,
            };
            let nl = cost_node(
                &C,
                &CostFeatures::join(NodeType::NestLoopJoin, n, n, n, 1),
                ch,
            );
            let hj = cost_node(&C, &CostFeatures::join(NodeType::HashJoin, n, n, n, 1), ch);
            nl - hj
        };
        for n in [2.0, 10.0, 100.0, 1000.0] {
            assert!(cmp(n, 2.0) > 0.0);
        }
        assert!(cmp(1.0, 2.0) < 0.0);
        let symbolic = |n: f64, k: f64| n * k + 0.0025 * n * n - k - 0.0225 * n;
        for n in [1.0, 2.0, 4.0, 8.0, 16.0] {
            for k in [0.0, 0.005, 0.01] {
                assert!((cmp(n, k) - symbolic(n, k)).abs() < 1e-9);
            }
        }
        // With a free inner, nested loop wins below n = 9 and loses above.
        assert!(cmp(8.0, 0.0) < 0.0);
        assert!(cmp(10.0, 0.0) > 0.0);
    }

    #[test]
    fn constants_must_be_positive() {
        assert!(C.validate().is_ok());
        let mut bad = C;
        bad.cpu_tuple_cost = 0.0;
        assert!(bad.validate().is_err());
    }
}
