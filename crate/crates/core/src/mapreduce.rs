//! Partitioned map-reduce covariance.
//!
//! Rows are split round-robin into `W` partitions; each mapper produces
//! first and second moment sums, mapper outputs are buffered and reduced in
//! ascending partition order, and the final sums become a sample covariance.

use crate::error::{Error, Result};
use crate::executor;
use crate::linalg::Matrix;

/// Moment sums over a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialStats {
    pub n: usize,
    pub sum: Vec<f64>,
    /// Upper and lower triangles both filled, so it is symmetric as stored.
    pub sum_outer: Matrix,
}

impl PartialStats {
    /// The reducer's identity element.
    pub fn zero(dim: usize) -> Self {
        PartialStats {
            n: 0,
            sum: vec![0.0; dim],
            sum_outer: Matrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    fn accumulate(&mut self, x: &[f64]) {
        let d = self.dim();
        self.n += 1;
        for i in 0..d {
            self.sum[i] += x[i];
            for j in i..d {
                self.sum_outer[(i, j)] += x[i] * x[j];
            }
        }
    }

    fn mirror(&mut self) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..i {
                self.sum_outer[(i, j)] = self.sum_outer[(j, i)];
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Partition<T> {
    pub index: usize,
    pub items: Vec<T>,
}

/// Round-robin split: item `r` goes to partition `r % parts`.
pub fn partition_rows<T: Clone>(items: &[T], parts: usize) -> Result<Vec<Partition<T>>> {
    if parts == 0 {
        return Err(Error::ZeroPartitions);
    }
    if parts > items.len() {
        return Err(Error::SplitTooFine {
            rows: items.len(),
            parts,
        });
    }
    let mut out: Vec<Partition<T>> = (0..parts)
        .map(|index| Partition {
            index,
            items: Vec::with_capacity(items.len() / parts + 1),
        })
        .collect();
    for (r, item) in items.iter().enumerate() {
        out[r % parts].items.push(item.clone());
    }
    Ok(out)
}

pub fn covariance_mapper<R: AsRef<[f64]>>(p: &Partition<R>) -> Result<PartialStats> {
    let first = p.items.first().ok_or(Error::EmptyPartition(p.index))?;
    let dim = first.as_ref().len();
    let mut stats = PartialStats::zero(dim);
    for row in &p.items {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        stats.accumulate(row);
    }
    stats.mirror();
    Ok(stats)
}

pub fn covariance_reducer(a: PartialStats, b: PartialStats) -> Result<PartialStats> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let mut out = a;
    out.n += b.n;
    for (x, y) in out.sum.iter_mut().zip(&b.sum) {
        *x += y;
    }
    let d = out.dim();
    for i in 0..d {
        for j in 0..d {
            out.sum_outer[(i, j)] += b.sum_outer[(i, j)];
        }
    }
    Ok(out)
}

/// Mappers run concurrently on `workers` threads. Their outputs are
/// buffered and folded from `identity` in partition-index order, so the
/// result does not depend on completion order. The first failing mapper
/// (lowest index) determines the error.
pub fn run_mapreduce<T, S, M, R>(
    partitions: &[Partition<T>],
    mapper: M,
    reducer: R,
    identity: S,
    workers: usize,
) -> Result<S>
where
    T: Sync,
    S: Send,
    M: Fn(&Partition<T>) -> Result<S> + Sync + Send,
    R: Fn(S, S) -> Result<S>,
{
    if partitions.is_empty() {
        return Err(Error::ZeroPartitions);
    }
    let mapped = executor::run_indexed(workers, partitions.len(), |i| mapper(&partitions[i]))?;
    let mut acc = identity;
    for (i, out) in mapped.into_iter().enumerate() {
        let index = partitions[i].index;
        let stats = out.map_err(|e| Error::Task {
            index,
            source: Box::new(e),
        })?;
        acc = reducer(acc, stats).map_err(|e| Error::Task {
            index,
            source: Box::new(e),
        })?;
    }
    Ok(acc)
}

/// Sample covariance `(sum_outer - n mu mu^T) / (n - 1)`.
pub fn finalize_covariance(stats: &PartialStats) -> Result<Matrix> {
    if stats.n < 2 {
        return Err(Error::InsufficientSamples(stats.n));
    }
    let n = stats.n as f64;
    let d = stats.dim();
    let mu: Vec<f64> = stats.sum.iter().map(|s| s / n).collect();
    let mut c = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = (stats.sum_outer[(i, j)] - n * mu[i] * mu[j]) / (n - 1.0);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Partition, map, reduce and finalize in one call.
pub fn covariance<R: AsRef<[f64]> + Clone + Sync>(
    rows: &[R],
    partitions: usize,
    workers: usize,
) -> Result<(Matrix, PartialStats)> {
    let dim = rows.first().map_or(0, |r| r.as_ref().len());
    let parts = partition_rows(rows, partitions)?;
    let stats = run_mapreduce(
        &parts,
        covariance_mapper,
        covariance_reducer,
        PartialStats::zero(dim),
        workers,
    )?;
    Ok((finalize_covariance(&stats)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(rows: Vec<Vec<f64>>) -> Partition<Vec<f64>> {
        Partition { index: 0, items: rows }
    }

    #[test]
    fn round_robin_sizes() {
        let rows: Vec<usize> = (0..10).collect();
        let one = partition_rows(&rows, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].items, rows);
        let three = partition_rows(&rows, 3).unwrap();
        let sizes: Vec<_> = three.iter().map(|p| p.items.len()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert_eq!(three[1].items, vec![1, 4, 7]);
        assert!(matches!(
            partition_rows(&rows[..2], 5),
            Err(Error::SplitTooFine { rows: 2, parts: 5 })
        ));
        assert!(matches!(partition_rows(&rows, 0), Err(Error::ZeroPartitions)));
    }

    #[test]
    fn mapper_single_and_duplicate_rows() {
        let x = vec![1.0, -2.0, 3.0];
        let s = covariance_mapper(&part(vec![x.clone()])).unwrap();
        assert_eq!(s.n, 1);
        assert_eq!(s.sum, x);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s.sum_outer[(i, j)], x[i] * x[j]);
            }
        }
        let s2 = covariance_mapper(&part(vec![x.clone(), x.clone()])).unwrap();
        assert_eq!(s2.n, 2);
        assert_eq!(s2.sum, vec![2.0, -4.0, 6.0]);
        assert_eq!(s2.sum_outer[(0, 2)], 2.0 * x[0] * x[2]);
        assert!(matches!(
            covariance_mapper::<Vec<f64>>(&part(vec![])),
            Err(Error::EmptyPartition(0))
        ));
    }

    #[test]
    fn reducer_identity_and_counts() {
        let a = covariance_mapper(&part(vec![vec![1.0, 2.0], vec![3.0, 5.0]])).unwrap();
        let b = covariance_mapper(&part(vec![vec![0.5, 0.5]])).unwrap();
        assert_eq!(covariance_reducer(a.clone(), PartialStats::zero(2)).unwrap(), a);
        assert_eq!(covariance_reducer(a.clone(), b).unwrap().n, 3);
        assert!(covariance_reducer(a, PartialStats::zero(3)).is_err());
    }

    #[test]
    fn finalize_hand_example() {
        let s = covariance_mapper(&part(vec![vec![0.0, 0.0], vec![2.0, 2.0]])).unwrap();
        let c = finalize_covariance(&s).unwrap();
        assert_eq!(c.as_slice(), &[2.0, 2.0, 2.0, 2.0]);

        let same = covariance_mapper(&part(vec![vec![1.5, -3.0]; 4])).unwrap();
        assert_eq!(finalize_covariance(&same).unwrap().as_slice(), &[0.0; 4]);

        let single = covariance_mapper(&part(vec![vec![1.0, 1.0]])).unwrap();
        assert!(matches!(
            finalize_covariance(&single),
            Err(Error::InsufficientSamples(1))
        ));
    }

    #[test]
    fn mapper_failure_carries_partition_index() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 1.0]).collect();
        let parts = partition_rows(&rows, 4).unwrap();
        let err = run_mapreduce(
            &parts,
            |p| {
                if p.index == 2 {
                    Err(Error::EmptyPartition(p.index))
                } else {
                    covariance_mapper(p)
                }
            },
            covariance_reducer,
            PartialStats::zero(2),
            2,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Task { index: 2, .. }));
    }

    #[test]
    fn single_partition_equals_mapper() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let parts = partition_rows(&rows, 1).unwrap();
        let direct = covariance_mapper(&parts[0]).unwrap();
        let via = run_mapreduce(&parts, covariance_mapper, covariance_reducer, PartialStats::zero(2), 1).unwrap();
        assert_eq!(direct, via);
    }
}
