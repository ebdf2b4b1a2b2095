//! Confusion matrices, node and whole-system accuracy, and the per-node
//! accuracy table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datapipe::NodeSample;
use crate::error::{Error, Result};
use crate::hierarchy::{argmax2, BinaryNode, HierarchyTree, LeafLabel, NodeId};

/// Rows are true labels, columns predictions, both in leaf order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, truth: LeafLabel, pred: LeafLabel) {
        self.counts[truth.index()][pred.index()] += 1;
    }

    pub fn from_pairs(truth: &[LeafLabel], pred: &[LeafLabel]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Shape(format!("{} labels but {} predictions", truth.len(), pred.len())));
        }
        if truth.is_empty() {
            return Err(Error::invalid("confusion matrix of an empty set"));
        }
        let mut m = Self::new();
        for (&t, &p) in truth.iter().zip(pred) {
            m.add(t, p);
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> [u64; 4] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for l in LeafLabel::ALL {
            let _ = write!(s, ",{}", l.name());
        }
        s.push('\n');
        for l in LeafLabel::ALL {
            s.push_str(l.name());
            for c in self.counts[l.index()] {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }
}

fn check_inputs<X>(inputs: &[X], truth: &[LeafLabel]) -> Result<()> {
    if inputs.len() != truth.len() {
        return Err(Error::Shape(format!("{} inputs but {} labels", inputs.len(), truth.len())));
    }
    if inputs.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    Ok(())
}

/// Hard-routing predictions tallied against the true leaves.
pub fn confusion<N: BinaryNode, X: AsRef<[f64]>>(
    tree: &HierarchyTree<N>,
    inputs: &[X],
    truth: &[LeafLabel],
) -> Result<ConfusionMatrix> {
    check_inputs(inputs, truth)?;
    let pred = inputs.iter().map(|x| tree.predict_hard(x.as_ref())).collect::<Result<Vec<_>>>()?;
    ConfusionMatrix::from_pairs(truth, &pred)
}

/// Accuracy of the argmax of the chained leaf distribution.
pub fn soft_accuracy<N: BinaryNode, X: AsRef<[f64]>>(
    tree: &HierarchyTree<N>,
    inputs: &[X],
    truth: &[LeafLabel],
) -> Result<f64> {
    check_inputs(inputs, truth)?;
    let mut correct = 0usize;
    for (x, &t) in inputs.iter().zip(truth) {
        if tree.predict_soft(x.as_ref())?.argmax() == t {
            correct += 1;
        }
    }
    Ok(correct as f64 / truth.len() as f64)
}

pub fn node_accuracy<N: BinaryNode>(node: &N, data: &[NodeSample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("node evaluation set is empty"));
    }
    let mut correct = 0usize;
    for s in data {
        if argmax2(node.prob(s.image.data())?) == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeAccuracies {
    pub carci: f64,
    pub norbe: f64,
    pub invis: f64,
}

impl NodeAccuracies {
    pub fn get(&self, id: NodeId) -> f64 {
        match id {
            NodeId::Carci => self.carci,
            NodeId::NorBe => self.norbe,
            NodeId::InvIs => self.invis,
        }
    }
}

/// Full-precision evaluation summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    pub soft_accuracy: f64,
    pub nodes: NodeAccuracies,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableRow {
    Carci,
    NorBe,
    InvIs,
    WholeSystem,
}

impl TableRow {
    pub const ALL: [TableRow; 4] = [TableRow::Carci, TableRow::NorBe, TableRow::InvIs, TableRow::WholeSystem];

    pub fn label(self) -> &'static str {
        match self {
            TableRow::Carci => "Carci",
            TableRow::NorBe => "NorBe",
            TableRow::InvIs => "InvIs",
            TableRow::WholeSystem => "Whole system",
        }
    }

    pub fn from_label(s: &str) -> Option<TableRow> {
        TableRow::ALL.into_iter().find(|r| r.label() == s)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl From<NodeId> for TableRow {
    fn from(id: NodeId) -> Self {
        match id {
            NodeId::Carci => TableRow::Carci,
            NodeId::NorBe => TableRow::NorBe,
            NodeId::InvIs => TableRow::InvIs,
        }
    }
}

pub const ABSENT: &str = "-";

/// Three decimals with at most one trailing zero dropped: 1.000 → "1.00",
/// 0.965 → "0.965".
pub fn format_accuracy(v: f64) -> String {
    let mut s = format!("{v:.3}");
    if s.ends_with('0') {
        s.pop();
    }
    s
}

/// Accuracy table: fixed rows, one column per dataset configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTable {
    pub columns: Vec<String>,
    /// `cells[row][column]`, rows in [`TableRow::ALL`] order.
    pub cells: [Vec<Option<f64>>; 4],
}

impl PerformanceTable {
    pub fn with_columns<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        let columns: Vec<String> = columns.into_iter().map(Into::into).collect();
        let n = columns.len();
        PerformanceTable { columns, cells: std::array::from_fn(|_| vec![None; n]) }
    }

    /// Columns appear in first-mention order. A later triple for the same
    /// cell replaces an earlier one.
    pub fn from_results(results: &[(TableRow, &str, f64)]) -> Result<Self> {
        let mut t = PerformanceTable::with_columns(Vec::<String>::new());
        for &(row, col, acc) in results {
            t.set(row, col, acc)?;
        }
        Ok(t)
    }

    pub fn set(&mut self, row: TableRow, column: &str, acc: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::invalid(format!("accuracy {acc} outside [0, 1]")));
        }
        let c = match self.columns.iter().position(|c| c == column) {
            Some(c) => c,
            None => {
                self.columns.push(column.to_string());
                for r in &mut self.cells {
                    r.push(None);
                }
                self.columns.len() - 1
            }
        };
        self.cells[row.index()][c] = Some(acc);
        Ok(())
    }

    pub fn get(&self, row: TableRow, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|c| c == column)?;
        self.cells[row.index()][c]
    }

    fn rendered(&self) -> Vec<Vec<String>> {
        let mut rows = vec![std::iter::once("Models".to_string()).chain(self.columns.iter().cloned()).collect::<Vec<_>>()];
        for r in TableRow::ALL {
            let mut line = vec![r.label().to_string()];
            line.extend(self.cells[r.index()].iter().map(|c| c.map_or(ABSENT.to_string(), format_accuracy)));
            rows.push(line);
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.rendered() {
            s.push_str(&row.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    /// Fixed-width text table.
    pub fn render(&self) -> String {
        let rows = self.rendered();
        let widths: Vec<usize> = (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut s = String::new();
        for (i, row) in rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            s.push_str(cells.join(" | ").trim_end());
            s.push('\n');
            if i == 0 {
                s.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
                s.push('\n');
            }
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Format { path: "<table csv>".into(), msg };
        let mut lines = text.lines().filter(|l| !l.is_empty());
        let header = split_csv(lines.next().ok_or_else(|| bad("empty table".into()))?);
        if header.first().map(String::as_str) != Some("Models") {
            return Err(bad("first header cell must be Models".into()));
        }
        let mut t = PerformanceTable::with_columns(header[1..].iter().cloned());
        let mut seen = Vec::new();
        for line in lines {
            let cells = split_csv(line);
            if cells.len() != header.len() {
                return Err(bad(format!("row has {} cells, header has {}", cells.len(), header.len())));
            }
            let row = TableRow::from_label(&cells[0]).ok_or_else(|| bad(format!("unknown row {}", cells[0])))?;
            seen.push(row);
            for (c, cell) in cells[1..].iter().enumerate() {
                t.cells[row.index()][c] = match cell.as_str() {
                    ABSENT => None,
                    v => Some(v.parse::<f64>().map_err(|e| bad(format!("cell {v}: {e}")))?),
                };
            }
        }
        if seen != TableRow::ALL {
            return Err(bad("rows must be Carci, NorBe, InvIs, Whole system".into()));
        }
        Ok(t)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(ch) = chars.next() {
        match (ch, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(ch),
        }
    }
    out.push(cur);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{HierarchyTree, LeafLabel::*};
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    struct Const(f64);

    impl BinaryNode for Const {
        fn prob(&self, _: &[f64]) -> Result<[f64; 2]> {
            Ok([1.0 - self.0, self.0])
        }
    }

    /// Reads the leaf index planted in the first input value.
    struct Oracle(NodeId);

    impl BinaryNode for Oracle {
        fn prob(&self, x: &[f64]) -> Result<[f64; 2]> {
            let leaf = LeafLabel::from_index(x[0] as usize).unwrap();
            let p1 = match self.0.class_of(leaf) {
                Some(1) => 1.0,
                Some(_) => 0.0,
                None => 0.5,
            };
            Ok([1.0 - p1, p1])
        }
    }

    #[test]
    fn perfect_predictor_is_diagonal() {
        let tree = HierarchyTree::new(Oracle(NodeId::Carci), Oracle(NodeId::NorBe), Oracle(NodeId::InvIs));
        let truth: Vec<LeafLabel> = LeafLabel::ALL.iter().flat_map(|&l| std::iter::repeat_n(l, 25)).collect();
        let inputs: Vec<Vec<f64>> = truth.iter().map(|l| vec![l.index() as f64]).collect();
        let m = confusion(&tree, &inputs, &truth).unwrap();
        for i in 0..4 {
            assert_eq!(m.counts[i][i], 25);
        }
        assert_eq!(m.total(), 100);
        assert_eq!(m.accuracy(), 1.0);
        assert_eq!(soft_accuracy(&tree, &inputs, &truth).unwrap(), 1.0);
    }

    #[test]
    fn empty_sets_rejected() {
        let tree = HierarchyTree::new(Const(0.5), Const(0.5), Const(0.5));
        let none: Vec<Vec<f64>> = vec![];
        assert!(confusion(&tree, &none, &[]).is_err());
        assert!(node_accuracy(&Const(0.5), &[]).is_err());
        assert!(ConfusionMatrix::from_pairs(&[Normal], &[]).is_err());
    }

    #[test]
    fn random_predictor_near_chance() {
        let mut rng = rng_from_seed(17);
        let truth: Vec<LeafLabel> = (0..10_000).map(|i| LeafLabel::from_index(i % 4).unwrap()).collect();
        let pred: Vec<LeafLabel> = (0..10_000).map(|_| LeafLabel::from_index(rng.random_range(0..4)).unwrap()).collect();
        let acc = ConfusionMatrix::from_pairs(&truth, &pred).unwrap().accuracy();
        assert!((acc - 0.25).abs() < 0.02, "{acc}");
    }

    #[test]
    fn node_accuracy_examples() {
        use crate::datapipe::Image;
        let sample = |label| NodeSample { image: Image::constant(1, 1, 1, 0.0).unwrap(), label };
        let balanced: Vec<NodeSample> = (0..50).map(|i| sample(i % 2)).collect();
        assert_eq!(node_accuracy(&Const(0.0), &balanced).unwrap(), 0.5);
        let ones: Vec<NodeSample> = (0..50).map(|i| sample(usize::from(i != 0))).collect();
        assert_eq!(node_accuracy(&Const(1.0), &ones).unwrap(), 0.98);
        assert_eq!(node_accuracy(&Const(1.0), &ones[1..]).unwrap(), 1.0);
    }

    #[test]
    fn confusion_csv_layout() {
        let m = ConfusionMatrix::from_pairs(&[Normal, Benign, Benign], &[Normal, Normal, Benign]).unwrap();
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "true\\pred,Normal,Benign,InSitu,Invasive");
        assert_eq!(lines[2], "Benign,1,1,0,0");
        assert_eq!(m.row_sums(), [1, 2, 0, 0]);
    }

    #[test]
    fn accuracy_formatting() {
        assert_eq!(format_accuracy(1.0), "1.00");
        assert_eq!(format_accuracy(0.98), "0.98");
        assert_eq!(format_accuracy(0.965), "0.965");
        assert_eq!(format_accuracy(0.963), "0.963");
        assert_eq!(format_accuracy(0.0), "0.00");
        assert_eq!(format_accuracy(0.5), "0.50");
    }

    #[test]
    fn empty_column_is_all_dashes() {
        let t = PerformanceTable::with_columns(["Init."]);
        let csv = t.to_csv();
        assert_eq!(csv, "Models,Init.\nCarci,-\nNorBe,-\nInvIs,-\nWhole system,-\n");
        assert_eq!(PerformanceTable::parse_csv(&csv).unwrap(), t);
    }

    #[test]
    fn single_cell_table() {
        let t = PerformanceTable::from_results(&[(TableRow::Carci, "Init.", 0.5)]).unwrap();
        assert_eq!(t.to_csv(), "Models,Init.\nCarci,0.50\nNorBe,-\nInvIs,-\nWhole system,-\n");
        assert!(t.render().contains("Carci        | 0.50"));
    }

    #[test]
    fn out_of_range_accuracy_rejected() {
        assert!(PerformanceTable::from_results(&[(TableRow::Carci, "x", 1.5)]).is_err());
        assert!(PerformanceTable::parse_csv("Models,x\nCarci,0.5\n").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(cells in prop::collection::vec(prop::option::of(0u32..=1000), 8)) {
            let mut t = PerformanceTable::with_columns(["A", "B, quoted"]);
            for (i, c) in cells.iter().enumerate() {
                t.cells[i / 2][i % 2] = c.map(|k| k as f64 / 1000.0);
            }
            let parsed = PerformanceTable::parse_csv(&t.to_csv()).unwrap();
            prop_assert_eq!(&parsed, &t);
            prop_assert_eq!(parsed.to_csv(), t.to_csv());
        }

        #[test]
        fn confusion_counts_sum_to_size(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
            let truth: Vec<LeafLabel> = pairs.iter().map(|p| LeafLabel::from_index(p.0).unwrap()).collect();
            let pred: Vec<LeafLabel> = pairs.iter().map(|p| LeafLabel::from_index(p.1).unwrap()).collect();
            let m = ConfusionMatrix::from_pairs(&truth, &pred).unwrap();
            prop_assert_eq!(m.total() as usize, pairs.len());
            let agree = pairs.iter().filter(|p| p.0 == p.1).count();
            prop_assert_eq!(m.trace() as usize, agree);
            prop_assert_eq!(m.accuracy(), agree as f64 / pairs.len() as f64);
            for l in 0..4 {
                prop_assert_eq!(m.row_sums()[l] as usize, pairs.iter().filter(|p| p.0 == l).count());
            }
        }
    }
}
