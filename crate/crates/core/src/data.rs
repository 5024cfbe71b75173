//! Drug–disease association data: loading, pruning, fold splitting and
//! negative sampling.
//!
//! An [`AssociationMatrix`] is a sparse binary `m × n` matrix stored as
//! sorted adjacency lists in both directions, so that a drug's behavior
//! vector (its row) and a disease's behavior vector (its column) are both
//! cheap to enumerate.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Binary drug–disease association matrix with external id maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationMatrix {
    drug_ids: Vec<String>,
    disease_ids: Vec<String>,
    /// Sorted disease indices per drug.
    rows: Vec<Vec<usize>>,
    /// Sorted drug indices per disease.
    cols: Vec<Vec<usize>>,
    num_positives: usize,
}

impl AssociationMatrix {
    /// Builds a matrix from id lists and index pairs.
    ///
    /// Duplicate pairs are collapsed. Ids with no associations are kept, which
    /// is what [`prune_empty`] exists to remove.
    pub fn from_parts(
        drug_ids: Vec<String>,
        disease_ids: Vec<String>,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let m = drug_ids.len();
        let n = disease_ids.len();
        if m == 0 || n == 0 {
            return Err(Error::Empty("association matrix has no drugs or no diseases".into()));
        }
        check_unique(&drug_ids, "drug")?;
        check_unique(&disease_ids, "disease")?;

        let mut rows = vec![Vec::new(); m];
        let mut cols = vec![Vec::new(); n];
        for (i, j) in pairs {
            if i >= m {
                return Err(Error::IndexOutOfRange { kind: "drug", index: i, size: m });
            }
            if j >= n {
                return Err(Error::IndexOutOfRange { kind: "disease", index: j, size: n });
            }
            rows[i].push(j);
            cols[j].push(i);
        }
        let mut num_positives = 0;
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            num_positives += r.len();
        }
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
        }
        if num_positives == 0 {
            return Err(Error::Empty("association matrix has no positive pairs".into()));
        }
        if num_positives == m * n {
            return Err(Error::InvalidData(
                "every drug-disease pair is positive; nothing left to predict".into(),
            ));
        }
        Ok(Self {
            drug_ids,
            disease_ids,
            rows,
            cols,
            num_positives,
        })
    }

    /// Builds a matrix from string id pairs, assigning indices by first
    /// appearance. Duplicates are logged and collapsed.
    pub fn from_edges<'a>(edges: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut drug_ids = Vec::new();
        let mut disease_ids = Vec::new();
        let mut drug_index: HashMap<String, usize> = HashMap::new();
        let mut disease_index: HashMap<String, usize> = HashMap::new();
        let mut pairs = Vec::new();
        let mut seen = HashSet::new();
        for (d, s) in edges {
            let i = *drug_index.entry(d.to_string()).or_insert_with(|| {
                drug_ids.push(d.to_string());
                drug_ids.len() - 1
            });
            let j = *disease_index.entry(s.to_string()).or_insert_with(|| {
                disease_ids.push(s.to_string());
                disease_ids.len() - 1
            });
            if seen.insert((i, j)) {
                pairs.push((i, j));
            } else {
                log::warn!("duplicate association ({d}, {s}) ignored");
            }
        }
        Self::from_parts(drug_ids, disease_ids, pairs)
    }

    pub fn num_drugs(&self) -> usize {
        self.drug_ids.len()
    }

    pub fn num_diseases(&self) -> usize {
        self.disease_ids.len()
    }

    pub fn num_positives(&self) -> usize {
        self.num_positives
    }

    /// Fraction of zero entries, `1 - |positives| / (m n)`.
    pub fn sparsity(&self) -> f64 {
        1.0 - self.num_positives as f64 / (self.num_drugs() as f64 * self.num_diseases() as f64)
    }

    pub fn drug_ids(&self) -> &[String] {
        &self.drug_ids
    }

    pub fn disease_ids(&self) -> &[String] {
        &self.disease_ids
    }

    pub fn drug_index(&self, id: &str) -> Option<usize> {
        self.drug_ids.iter().position(|d| d == id)
    }

    pub fn disease_index(&self, id: &str) -> Option<usize> {
        self.disease_ids.iter().position(|d| d == id)
    }

    /// Diseases associated with `drug`, ascending. This is the support of
    /// the drug's behavior vector.
    pub fn drug_row(&self, drug: usize) -> &[usize] {
        &self.rows[drug]
    }

    /// Drugs associated with `disease`, ascending.
    pub fn disease_col(&self, disease: usize) -> &[usize] {
        &self.cols[disease]
    }

    pub fn contains(&self, drug: usize, disease: usize) -> bool {
        self.rows
            .get(drug)
            .is_some_and(|r| r.binary_search(&disease).is_ok())
    }

    /// All positive pairs in `(drug, disease)` lexicographic order.
    pub fn positives(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&j| (i, j)))
    }

    pub(crate) fn check_drug(&self, drug: usize) -> Result<()> {
        if drug >= self.num_drugs() {
            return Err(Error::IndexOutOfRange { kind: "drug", index: drug, size: self.num_drugs() });
        }
        Ok(())
    }

    pub(crate) fn check_disease(&self, disease: usize) -> Result<()> {
        if disease >= self.num_diseases() {
            return Err(Error::IndexOutOfRange {
                kind: "disease",
                index: disease,
                size: self.num_diseases(),
            });
        }
        Ok(())
    }

    /// Writes the matrix as a `drug_id<TAB>disease_id` edge list.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, j) in self.positives() {
            writeln!(w, "{}\t{}", self.drug_ids[i], self.disease_ids[j])?;
        }
        Ok(())
    }
}

fn check_unique(ids: &[String], kind: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidData(format!("duplicate {kind} id `{id}`")));
        }
    }
    Ok(())
}

/// Loads a UTF-8 edge list: one `drug_id<TAB>disease_id` pair per line,
/// blank lines and `#` comments ignored.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<AssociationMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(BufReader::new(file)).map_err(|e| match e {
        Error::Empty(msg) => Error::Empty(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_edge_list<R: BufRead>(reader: R) -> Result<AssociationMatrix> {
    let mut edges: Vec<(String, String)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: lineno + 1, message: e.to_string() })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(drug), Some(disease), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected `drug_id<TAB>disease_id`, got `{line}`"),
            });
        };
        let (drug, disease) = (drug.trim(), disease.trim());
        if drug.is_empty() || disease.is_empty() {
            return Err(Error::Parse { line: lineno + 1, message: "empty id".into() });
        }
        edges.push((drug.to_string(), disease.to_string()));
    }
    if edges.is_empty() {
        return Err(Error::Empty("edge list contains no associations".into()));
    }
    AssociationMatrix::from_edges(edges.iter().map(|(a, b)| (a.as_str(), b.as_str())))
}

/// Loads a dense whitespace-separated 0/1 matrix (one drug per line). Ids are
/// synthesized as `drug_<i>` / `disease_<j>`. Unlike an edge list this format
/// can carry drugs or diseases without any association.
pub fn load_dense_matrix(path: impl AsRef<Path>) -> Result<AssociationMatrix> {
    let path = path.as_ref();
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    parse_dense_matrix(&text)
}

pub fn parse_dense_matrix(text: &str) -> Result<AssociationMatrix> {
    let mut pairs = Vec::new();
    let mut width = None;
    let mut m = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut count = 0;
        for (j, tok) in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).enumerate() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("not a number: `{tok}`"),
            })?;
            if v != 0.0 {
                pairs.push((m, j));
            }
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected {w} columns, found {count}"),
                })
            }
            _ => {}
        }
        m += 1;
    }
    let n = width.ok_or_else(|| Error::Empty("matrix file contains no rows".into()))?;
    AssociationMatrix::from_parts(
        (0..m).map(|i| format!("drug_{i}")).collect(),
        (0..n).map(|j| format!("disease_{j}")).collect(),
        pairs,
    )
}

/// Removes drugs with no associated disease and diseases with no associated
/// drug, re-indexing both id maps in their original relative order.
pub fn prune_empty(mat: &AssociationMatrix) -> Result<AssociationMatrix> {
    let keep_drugs: Vec<usize> = (0..mat.num_drugs()).filter(|&i| !mat.rows[i].is_empty()).collect();
    let keep_diseases: Vec<usize> =
        (0..mat.num_diseases()).filter(|&j| !mat.cols[j].is_empty()).collect();
    if keep_drugs.is_empty() || keep_diseases.is_empty() {
        return Err(Error::Empty("pruning would leave an empty matrix".into()));
    }
    let mut disease_map = vec![usize::MAX; mat.num_diseases()];
    for (new, &old) in keep_diseases.iter().enumerate() {
        disease_map[old] = new;
    }
    let pairs = keep_drugs
        .iter()
        .enumerate()
        .flat_map(|(new_i, &old_i)| mat.rows[old_i].iter().map(|&j| (new_i, disease_map[j])).collect::<Vec<_>>());
    AssociationMatrix::from_parts(
        keep_drugs.iter().map(|&i| mat.drug_ids[i].clone()).collect(),
        keep_diseases.iter().map(|&j| mat.disease_ids[j].clone()).collect(),
        pairs,
    )
}

/// Assignment of every positive pair to one of `num_folds` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    num_folds: usize,
    seed: u64,
    assignments: BTreeMap<(usize, usize), usize>,
}

impl FoldPlan {
    pub fn num_folds(&self) -> usize {
        self.num_folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of(&self, drug: usize, disease: usize) -> Option<usize> {
        self.assignments.get(&(drug, disease)).copied()
    }

    pub fn assignments(&self) -> &BTreeMap<(usize, usize), usize> {
        &self.assignments
    }

    /// Positives held out in `fold`, in `(drug, disease)` order.
    pub fn fold_positives(&self, fold: usize) -> Vec<(usize, usize)> {
        self.assignments
            .iter()
            .filter(|&(_, &f)| f == fold)
            .map(|(&p, _)| p)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_folds];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Writes `drug_id<TAB>disease_id<TAB>fold` lines in pair order.
    pub fn write_tsv<W: Write>(&self, mat: &AssociationMatrix, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# folds={} seed={}", self.num_folds, self.seed)?;
        for (&(i, j), &f) in &self.assignments {
            writeln!(w, "{}\t{}\t{}", mat.drug_ids[i], mat.disease_ids[j], f)?;
        }
        Ok(())
    }

    /// Reads a plan written by [`FoldPlan::write_tsv`] back against `mat`.
    pub fn read_tsv<R: BufRead>(mat: &AssociationMatrix, reader: R) -> Result<Self> {
        let mut num_folds = 0;
        let mut seed = 0;
        let mut assignments = BTreeMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse { line: lineno + 1, message: e.to_string() })?;
            let perr = |message: String| Error::Parse { line: lineno + 1, message };
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("folds", v)) => num_folds = v.parse().map_err(|_| perr(format!("bad folds `{v}`")))?,
                        Some(("seed", v)) => seed = v.parse().map_err(|_| perr(format!("bad seed `{v}`")))?,
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(perr(format!("expected 3 tab-separated fields, got `{line}`")));
            }
            let i = mat.drug_index(f[0]).ok_or_else(|| perr(format!("unknown drug `{}`", f[0])))?;
            let j = mat.disease_index(f[1]).ok_or_else(|| perr(format!("unknown disease `{}`", f[1])))?;
            if !mat.contains(i, j) {
                return Err(perr(format!("({}, {}) is not a positive pair", f[0], f[1])));
            }
            let fold: usize = f[2].parse().map_err(|_| perr(format!("bad fold `{}`", f[2])))?;
            assignments.insert((i, j), fold);
        }
        if num_folds == 0 {
            num_folds = assignments.values().max().map_or(0, |m| m + 1);
        }
        if assignments.len() != mat.num_positives() {
            return Err(Error::InvalidData(format!(
                "fold plan covers {} of {} positives",
                assignments.len(),
                mat.num_positives()
            )));
        }
        if assignments.values().any(|&f| f >= num_folds) {
            return Err(Error::InvalidData("fold index exceeds declared fold count".into()));
        }
        Ok(Self { num_folds, seed, assignments })
    }
}

/// Uniformly random partition of the positives into `k` folds whose sizes
/// differ by at most one.
pub fn make_folds(mat: &AssociationMatrix, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("number of folds must be at least 2, got {k}")));
    }
    if mat.num_positives() < k {
        return Err(Error::Config(format!(
            "{} positives cannot fill {k} folds",
            mat.num_positives()
        )));
    }
    let mut pairs: Vec<(usize, usize)> = mat.positives().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let assignments = pairs
        .into_iter()
        .enumerate()
        .map(|(pos, pair)| (pair, pos % k))
        .collect();
    Ok(FoldPlan { num_folds: k, seed, assignments })
}

/// The matrix with fold `held_out`'s positives removed. Dimensions and ids are
/// unchanged.
pub fn training_view(mat: &AssociationMatrix, plan: &FoldPlan, held_out: usize) -> Result<AssociationMatrix> {
    if held_out >= plan.num_folds {
        return Err(Error::IndexOutOfRange { kind: "fold", index: held_out, size: plan.num_folds });
    }
    AssociationMatrix::from_parts(
        mat.drug_ids.clone(),
        mat.disease_ids.clone(),
        mat.positives().filter(|&(i, j)| plan.fold_of(i, j) != Some(held_out)),
    )
}

/// Draws up to `count` distinct diseases not associated with `drug`,
/// uniformly without replacement. Returns every candidate when fewer than
/// `count` exist.
pub fn sample_negatives(mat: &AssociationMatrix, drug: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_negatives_with(mat, drug, count, &mut rng)
}

pub(crate) fn sample_negatives_with<R: rand::Rng + ?Sized>(
    mat: &AssociationMatrix,
    drug: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    mat.check_drug(drug)?;
    if count == 0 {
        return Err(Error::Config("negative sample count must be at least 1".into()));
    }
    let row = mat.drug_row(drug);
    let num_candidates = mat.num_diseases() - row.len();
    if num_candidates == 0 {
        return Err(Error::InvalidData(format!(
            "drug `{}` is associated with every disease",
            mat.drug_ids[drug]
        )));
    }
    // k-th non-associated disease, walking the sorted row
    let nth_candidate = |mut k: usize| {
        for &p in row {
            if p <= k {
                k += 1;
            } else {
                break;
            }
        }
        k
    };
    if num_candidates <= count {
        return Ok((0..num_candidates).map(nth_candidate).collect());
    }
    Ok(index::sample(rng, num_candidates, count)
        .into_iter()
        .map(nth_candidate)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

/// One training instance: a positive pair plus its sampled negative
/// diseases `U`, or a standalone negative pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePair {
    pub drug: usize,
    pub disease: usize,
    pub label: Label,
    pub negatives: Vec<usize>,
}

impl SamplePair {
    /// Builds a positive pair with freshly sampled negatives.
    pub fn positive<R: rand::Rng + ?Sized>(
        mat: &AssociationMatrix,
        drug: usize,
        disease: usize,
        neg_ratio: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !mat.contains(drug, disease) {
            return Err(Error::InvalidData(format!("({drug}, {disease}) is not a training positive")));
        }
        let negatives = sample_negatives_with(mat, drug, neg_ratio, rng)?;
        Ok(Self { drug, disease, label: Label::Positive, negatives })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(pairs: &[(&str, &str)]) -> AssociationMatrix {
        AssociationMatrix::from_edges(pairs.iter().copied()).unwrap()
    }

    fn grid(m: usize, n: usize, pairs: &[(usize, usize)]) -> AssociationMatrix {
        AssociationMatrix::from_parts(
            (0..m).map(|i| format!("d{i}")).collect(),
            (0..n).map(|j| format!("s{j}")).collect(),
            pairs.iter().copied(),
        )
        .unwrap()
    }

    #[test]
    fn three_line_file() {
        let mat = parse_edge_list("dA\ts1\ndA\ts2\ndB\ts1\n".as_bytes()).unwrap();
        assert_eq!((mat.num_drugs(), mat.num_diseases(), mat.num_positives()), (2, 2, 3));
        assert_eq!(mat.drug_ids(), ["dA", "dB"]);
        assert!(mat.contains(1, 0));
        assert!(!mat.contains(1, 1));
    }

    #[test]
    fn duplicates_collapse() {
        let mat = parse_edge_list("# header\ndA\ts1\ndA\ts1\ndB\ts2\n\n".as_bytes()).unwrap();
        assert_eq!(mat.num_positives(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_edge_list("dA\ts1\ndA s2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_edge_list("dA\ts1\tx\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse_edge_list("# nothing\n\n".as_bytes()), Err(Error::Empty(_))));
    }

    #[test]
    fn sparsity_matches_definition() {
        let mat = toy(&[("a", "x"), ("b", "y")]);
        assert_eq!(mat.sparsity(), 0.5);
    }

    #[test]
    fn dense_matrix_keeps_empty_rows() {
        let mat = parse_dense_matrix("0 1 0\n0 0 0\n1 0 0\n").unwrap();
        assert_eq!((mat.num_drugs(), mat.num_diseases(), mat.num_positives()), (3, 3, 2));
        assert!(mat.drug_row(1).is_empty());
        assert!(parse_dense_matrix("0 1\n0\n").is_err());
    }

    #[test]
    fn prune_drops_unused_drug() {
        let mat = grid(3, 3, &[(0, 0), (0, 2), (1, 1)]);
        let pruned = prune_empty(&mat).unwrap();
        assert_eq!((pruned.num_drugs(), pruned.num_diseases()), (2, 3));
        assert_eq!(pruned.drug_ids(), ["d0", "d1"]);
        assert_eq!(pruned.positives().collect::<Vec<_>>(), vec![(0, 0), (0, 2), (1, 1)]);
    }

    #[test]
    fn prune_reindexes_columns() {
        let mat = grid(3, 4, &[(0, 3), (2, 1)]);
        let pruned = prune_empty(&mat).unwrap();
        assert_eq!(pruned.drug_ids(), ["d0", "d2"]);
        assert_eq!(pruned.disease_ids(), ["s1", "s3"]);
        assert_eq!(pruned.positives().collect::<Vec<_>>(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn prune_fixed_point() {
        let mat = grid(2, 2, &[(0, 0), (1, 1)]);
        assert_eq!(prune_empty(&mat).unwrap(), mat);
    }

    #[test]
    fn folds_of_ten() {
        let pairs: Vec<_> = (0..10).map(|i| (i, i % 3)).collect();
        let mat = grid(10, 3, &pairs);
        let plan = make_folds(&mat, 5, 1).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2; 5]);
        assert_eq!(plan, make_folds(&mat, 5, 1).unwrap());
        assert!(make_folds(&mat, 1, 1).is_err());
        assert!(make_folds(&mat, 11, 1).is_err());
    }

    #[test]
    fn training_view_removes_held_out() {
        let pairs: Vec<_> = (0..10).map(|i| (i, i % 3)).collect();
        let mat = grid(10, 3, &pairs);
        let plan = make_folds(&mat, 5, 3).unwrap();
        let view = training_view(&mat, &plan, 2).unwrap();
        assert_eq!(view.num_positives(), 8);
        assert_eq!(view.num_drugs(), 10);
        for (i, j) in plan.fold_positives(2) {
            assert!(!view.contains(i, j));
            // each drug has a single positive, so its row is now empty
            assert!(view.drug_row(i).is_empty());
        }
        assert!(training_view(&mat, &plan, 5).is_err());
    }

    #[test]
    fn negatives_exhaustion() {
        let mat = grid(2, 4, &[(0, 0), (0, 1), (0, 3), (1, 0)]);
        assert_eq!(sample_negatives(&mat, 0, 5, 9).unwrap(), vec![2]);
        let all = sample_negatives(&mat, 1, 10, 9).unwrap();
        assert_eq!(all, vec![1, 2, 3]);
    }

    #[test]
    fn negatives_contract() {
        let pairs: Vec<_> = (0..13).map(|j| (0, j * 7)).chain([(1, 0)]).collect();
        let mat = grid(2, 313, &pairs);
        let s = sample_negatives(&mat, 0, 3, 42).unwrap();
        assert_eq!(s.len(), 3);
        let uniq: HashSet<_> = s.iter().collect();
        assert_eq!(uniq.len(), 3);
        assert!(s.iter().all(|&u| !mat.contains(0, u) && u < 313));
        assert_eq!(s, sample_negatives(&mat, 0, 3, 42).unwrap());
        assert!(matches!(sample_negatives(&mat, 2, 3, 42), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn fold_plan_tsv_roundtrip() {
        let pairs: Vec<_> = (0..12).map(|i| (i % 4, i / 4)).collect();
        let mat = grid(4, 4, &pairs);
        let plan = make_folds(&mat, 3, 5).unwrap();
        let mut buf = Vec::new();
        plan.write_tsv(&mat, &mut buf).unwrap();
        let back = FoldPlan::read_tsv(&mat, buf.as_slice()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn sample_pair_rejects_non_positive() {
        let mat = grid(2, 3, &[(0, 0), (1, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(SamplePair::positive(&mat, 0, 1, 2, &mut rng).is_err());
        let p = SamplePair::positive(&mat, 0, 0, 2, &mut rng).unwrap();
        assert_eq!(p.label, Label::Positive);
        assert!(p.negatives.iter().all(|&u| u != 0 && !mat.contains(0, u)));
    }
}
