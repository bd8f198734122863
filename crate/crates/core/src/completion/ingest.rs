//! Rating files and the train/test split.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SparseColumns;
use crate::error::{ModlError, Result};

/// Field separator of a rating file. Lines hold
/// `user, item, rating[, timestamp]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingFormat {
    DoubleColon,
    Comma,
    Tab,
}

impl RatingFormat {
    /// Guesses the separator from a sample line.
    pub fn detect(line: &str) -> Option<Self> {
        if line.contains("::") {
            Some(RatingFormat::DoubleColon)
        } else if line.contains('\t') {
            Some(RatingFormat::Tab)
        } else if line.contains(',') {
            Some(RatingFormat::Comma)
        } else {
            None
        }
    }

    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            RatingFormat::DoubleColon => line.split("::").collect(),
            RatingFormat::Comma => line.split(',').collect(),
            RatingFormat::Tab => line.split('\t').collect(),
        }
    }
}

impl std::str::FromStr for RatingFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "::" | "double-colon" | "dat" => Ok(RatingFormat::DoubleColon),
            "," | "comma" | "csv" => Ok(RatingFormat::Comma),
            "\t" | "tab" | "tsv" => Ok(RatingFormat::Tab),
            other => Err(format!("unknown rating format `{other}`")),
        }
    }
}

/// Ratings with contiguous user and item indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRatings {
    /// `(user, item, rating)`, one per distinct pair, in order of first
    /// appearance.
    pub triples: Vec<(usize, usize, f64)>,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// Lines that repeated an earlier `(user, item)` pair.
    pub duplicates: usize,
}

/// Parses ratings from a reader. `path` is only used in error messages.
/// A comma-separated file may start with a header line.
pub fn parse_ratings<R: BufRead>(reader: R, format: Option<RatingFormat>, path: &Path) -> Result<ParsedRatings> {
    let mut format = format;
    let mut users: HashMap<String, usize> = HashMap::new();
    let mut items: HashMap<String, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
    let mut triples = Vec::new();
    let mut duplicates = 0;
    let parse_err = |line: usize, message: String| ModlError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| ModlError::io(format!("reading {}", path.display()), e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fmt = match format {
            Some(f) => f,
            None => {
                let f = RatingFormat::detect(line)
                    .ok_or_else(|| parse_err(lineno, "cannot detect field separator".into()))?;
                format = Some(f);
                f
            }
        };
        let fields = fmt.split(line);
        if !(3..=4).contains(&fields.len()) {
            return Err(parse_err(
                lineno,
                format!("expected 3 or 4 fields, found {}", fields.len()),
            ));
        }
        let (user, item) = (fields[0].trim(), fields[1].trim());
        let rating: f64 = match fields[2].trim().parse() {
            Ok(v) => v,
            Err(_) if triples.is_empty() && fmt == RatingFormat::Comma && user_ids.is_empty() => {
                // header line
                continue;
            }
            Err(_) => return Err(parse_err(lineno, format!("invalid rating `{}`", fields[2].trim()))),
        };
        if !rating.is_finite() {
            return Err(parse_err(lineno, format!("non-finite rating `{}`", fields[2].trim())));
        }
        if user.is_empty() || item.is_empty() {
            return Err(parse_err(lineno, "empty user or item id".into()));
        }
        let u = *users.entry(user.to_string()).or_insert_with(|| {
            user_ids.push(user.to_string());
            user_ids.len() - 1
        });
        let i = *items.entry(item.to_string()).or_insert_with(|| {
            item_ids.push(item.to_string());
            item_ids.len() - 1
        });
        match pairs.get(&(u, i)) {
            Some(&pos) => {
                triples[pos] = (u, i, rating);
                duplicates += 1;
            }
            None => {
                pairs.insert((u, i), triples.len());
                triples.push((u, i, rating));
            }
        }
    }
    if triples.is_empty() {
        return Err(ModlError::EmptyInput(format!("no ratings in {}", path.display())));
    }
    Ok(ParsedRatings {
        triples,
        user_ids,
        item_ids,
        duplicates,
    })
}

/// Users are columns, items rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsDataset {
    /// Item count.
    pub p: usize,
    /// User count.
    pub n: usize,
    /// Per-user `(item, rating)` lists sorted by item.
    pub train: Vec<Vec<(usize, f64)>>,
    pub test: Vec<Vec<(usize, f64)>>,
    pub global_mean: f64,
    pub min_rating: f64,
    pub max_rating: f64,
    pub duplicates: usize,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

impl RatingsDataset {
    /// Splits `triples` at random, sending `round(test_fraction · N)` ratings
    /// to the test set.
    pub fn split(
        triples: &[(usize, usize, f64)],
        n_users: usize,
        n_items: usize,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(ModlError::InvalidConfig(format!(
                "test fraction must lie in [0, 1), got {test_fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..triples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (test_fraction * triples.len() as f64).round() as usize;
        let mut is_test = vec![false; triples.len()];
        for &i in &order[..n_test] {
            is_test[i] = true;
        }
        let mut train = vec![Vec::new(); n_users];
        let mut test = vec![Vec::new(); n_users];
        for (idx, &(u, i, r)) in triples.iter().enumerate() {
            if u >= n_users || i >= n_items {
                return Err(ModlError::Dimension(format!("rating ({u}, {i}) out of range")));
            }
            if is_test[idx] {
                test[u].push((i, r));
            } else {
                train[u].push((i, r));
            }
        }
        RatingsDataset::from_lists(train, test, n_items)
    }

    /// Builds a dataset from per-user lists.
    pub fn from_lists(mut train: Vec<Vec<(usize, f64)>>, mut test: Vec<Vec<(usize, f64)>>, p: usize) -> Result<Self> {
        let n = train.len();
        if test.len() != n {
            return Err(ModlError::Dimension("train and test user counts differ".into()));
        }
        for l in train.iter_mut().chain(test.iter_mut()) {
            l.sort_by_key(|e| e.0);
        }
        let count: usize = train.iter().map(Vec::len).sum();
        if count == 0 {
            return Err(ModlError::EmptyInput("training set is empty".into()));
        }
        let mut sum = 0.0;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(_, r) in train.iter().flatten() {
            sum += r;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        Ok(RatingsDataset {
            p,
            n,
            train,
            test,
            global_mean: sum / count as f64,
            min_rating: lo,
            max_rating: hi,
            duplicates: 0,
            user_ids: (0..n).map(|u| u.to_string()).collect(),
            item_ids: (0..p).map(|i| i.to_string()).collect(),
        })
    }

    pub fn train_count(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn test_count(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    /// Users with test ratings but no training ratings.
    pub fn cold_start_users(&self) -> usize {
        (0..self.n)
            .filter(|&u| self.train[u].is_empty() && !self.test[u].is_empty())
            .count()
    }

    /// Training ratings as sparse columns, one per user.
    pub fn train_columns(&self) -> SparseColumns {
        SparseColumns::new(self.p, self.train.clone())
    }

    /// Swaps the roles of users and items.
    pub fn transposed(&self) -> RatingsDataset {
        let flip = |lists: &[Vec<(usize, f64)>]| {
            let mut out = vec![Vec::new(); self.p];
            for (u, l) in lists.iter().enumerate() {
                for &(i, r) in l {
                    out[i].push((u, r));
                }
            }
            out
        };
        RatingsDataset {
            p: self.n,
            n: self.p,
            train: flip(&self.train),
            test: flip(&self.test),
            global_mean: self.global_mean,
            min_rating: self.min_rating,
            max_rating: self.max_rating,
            duplicates: self.duplicates,
            user_ids: self.item_ids.clone(),
            item_ids: self.user_ids.clone(),
        }
    }

    /// Moves a random `fraction` of each training set into a validation
    /// set, discarding the original test set.
    pub fn inner_split(&self, fraction: f64, seed: u64) -> Result<RatingsDataset> {
        let triples: Vec<(usize, usize, f64)> = self
            .train
            .iter()
            .enumerate()
            .flat_map(|(u, l)| l.iter().map(move |&(i, r)| (u, i, r)))
            .collect();
        RatingsDataset::split(&triples, self.n, self.p, fraction, seed)
    }
}

/// Options for [`ingest_ratings`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.25,
            seed: 0,
        }
    }
}

/// Reads a rating file and splits it into train and test sets.
pub fn ingest_ratings(path: impl AsRef<Path>, format: Option<RatingFormat>, split: &SplitConfig) -> Result<RatingsDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| ModlError::io(format!("opening {}", path.display()), e))?;
    let parsed = parse_ratings(std::io::BufReader::new(file), format, path)?;
    from_parsed(parsed, split)
}

pub fn from_parsed(parsed: ParsedRatings, split: &SplitConfig) -> Result<RatingsDataset> {
    let mut ds = RatingsDataset::split(
        &parsed.triples,
        parsed.user_ids.len(),
        parsed.item_ids.len(),
        split.test_fraction,
        split.seed,
    )?;
    ds.duplicates = parsed.duplicates;
    ds.user_ids = parsed.user_ids;
    ds.item_ids = parsed.item_ids;
    Ok(ds)
}

#[cfg(test)]
fn memory_path() -> std::path::PathBuf {
    std::path::PathBuf::from("<memory>")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ParsedRatings> {
        parse_ratings(text.as_bytes(), None, &memory_path())
    }

    #[test]
    fn double_colon_line() {
        let p = parse("1::20::3.5::978300760\n").unwrap();
        assert_eq!(p.triples, vec![(0, 0, 3.5)]);
        assert_eq!(p.user_ids, vec!["1"]);
        assert_eq!(p.item_ids, vec!["20"]);
    }

    #[test]
    fn formats_and_header() {
        let tab = parse("3\t7\t4\t881250949\n3\t8\t2\t881250950\n").unwrap();
        assert_eq!(tab.triples, vec![(0, 0, 4.0), (0, 1, 2.0)]);
        let csv = parse("userId,movieId,rating,timestamp\n5,9,1.5,0\n6,9,2\n").unwrap();
        assert_eq!(csv.triples, vec![(0, 0, 1.5), (1, 0, 2.0)]);
    }

    #[test]
    fn duplicates_keep_last() {
        let p = parse("1,1,3\n1,2,4\n1,1,5\n").unwrap();
        assert_eq!(p.triples, vec![(0, 0, 5.0), (0, 1, 4.0)]);
        assert_eq!(p.duplicates, 1);
    }

    #[test]
    fn malformed_line_reports_number() {
        match parse("1,1,3\n1,2\n").unwrap_err() {
            ModlError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        match parse("1::1::x\n").unwrap_err() {
            ModlError::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse("").unwrap_err(), ModlError::EmptyInput(_)));
        assert!(matches!(parse("\n\n").unwrap_err(), ModlError::EmptyInput(_)));
    }

    #[test]
    fn seeded_split_of_four_lines() {
        let p = parse("1,1,3\n1,2,4\n2,1,5\n2,2,1\n").unwrap();
        let split = SplitConfig {
            test_fraction: 0.25,
            seed: 11,
        };
        let a = from_parsed(p.clone(), &split).unwrap();
        let b = from_parsed(p, &split).unwrap();
        assert_eq!(a.train_count(), 3);
        assert_eq!(a.test_count(), 1);
        assert_eq!(a, b);
        for u in 0..a.n {
            for (i, _) in &a.test[u] {
                assert!(a.train[u].iter().all(|(j, _)| j != i));
            }
        }
    }

    #[test]
    fn transpose_round_trip() {
        let ds = RatingsDataset::split(&[(0, 1, 2.0), (1, 0, 3.0), (1, 2, 4.0)], 2, 3, 0.0, 0).unwrap();
        let t = ds.transposed();
        assert_eq!((t.p, t.n), (2, 3));
        assert_eq!(t.train[2], vec![(1, 4.0)]);
        assert_eq!(t.transposed().train, ds.train);
    }
}
