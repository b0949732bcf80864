//! Partitions of the index set `{(k, l, ~)}` used by the quenched-moment
//! decomposition.
//!
//! Element `2 j + t` stands for the `j`-th `(k, l)` pair (in order of `k`,
//! then `l`) with `t = 0` for the single-dot index and `t = 1` for the
//! double-dot index. A partition is stored as a restricted-growth string:
//! `labels[e]` is the block of element `e`, blocks numbered in order of first
//! appearance.

/// `(k, l)` for every pair, both 0-based.
pub fn pair_labels(p_vec: &[usize]) -> Vec<(usize, usize)> {
    p_vec
        .iter()
        .enumerate()
        .flat_map(|(k, &p)| (0..p).map(move |l| (k, l)))
        .collect()
}

/// All partitions in which no block holds both members of a pair.
pub fn admissible_partitions(p_vec: &[usize]) -> Vec<Vec<usize>> {
    let size = 2 * p_vec.iter().sum::<usize>();
    let mut out = Vec::new();
    let mut labels = Vec::with_capacity(size);
    grow(size, &mut labels, 0, &mut out);
    out
}

fn grow(size: usize, labels: &mut Vec<usize>, blocks: usize, out: &mut Vec<Vec<usize>>) {
    let e = labels.len();
    if e == size {
        out.push(labels.clone());
        return;
    }
    for b in 0..=blocks {
        // the double-dot member may not join its partner's block
        if e % 2 == 1 && labels[e - 1] == b {
            continue;
        }
        labels.push(b);
        grow(size, labels, blocks.max(b + 1), out);
        labels.pop();
    }
}

pub fn block_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Block sizes `|P|`.
pub fn block_sizes(labels: &[usize]) -> Vec<usize> {
    let mut sizes = vec![0; block_count(labels)];
    for &b in labels {
        sizes[b] += 1;
    }
    sizes
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut x = x;
        while self.parent[x] != r {
            let next = self.parent[x];
            self.parent[x] = r;
            x = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Superpartition: blocks joined whenever they hold the two members of some
/// pair, grouped into connected components. Components are listed by their
/// smallest block, each sorted.
pub fn superpartition(labels: &[usize]) -> Vec<Vec<usize>> {
    let nb = block_count(labels);
    let mut uf = UnionFind::new(nb);
    for pair in labels.chunks(2) {
        uf.union(pair[0], pair[1]);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; nb];
    for b in 0..nb {
        let r = uf.find(b);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(b);
    }
    groups
}

/// Bell numbers `B_0..=B_n` via the Bell triangle.
pub fn bell_numbers(n: usize) -> Vec<u64> {
    let mut bell = vec![1u64];
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![*row.last().unwrap()];
        for &v in &row {
            next.push(next.last().unwrap() + v);
        }
        bell.push(next[0]);
        row = next;
    }
    bell.truncate(n + 1);
    bell
}

/// Number of partitions of `2p` elements with none of `p` fixed disjoint
/// pairs inside one block: `sum_j (-1)^j C(p, j) B_{2p - j}`.
pub fn inclusion_exclusion_count(p: usize) -> u64 {
    let bell = bell_numbers(2 * p);
    let mut total: i128 = 0;
    let mut binom: i128 = 1;
    for j in 0..=p {
        let term = binom * bell[2 * p - j] as i128;
        total += if j % 2 == 0 { term } else { -term };
        binom = binom * (p - j) as i128 / (j + 1) as i128;
    }
    total as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_match_inclusion_exclusion() {
        assert_eq!(admissible_partitions(&[1]).len(), 1);
        assert_eq!(admissible_partitions(&[2]).len(), 7);
        assert_eq!(admissible_partitions(&[1, 1]).len(), 7);
        assert_eq!(inclusion_exclusion_count(1), 1);
        assert_eq!(inclusion_exclusion_count(2), 7);
        for p in 1..=4 {
            assert_eq!(
                admissible_partitions(&vec![1; p]).len() as u64,
                inclusion_exclusion_count(p)
            );
        }
    }

    #[test]
    fn bell_values() {
        assert_eq!(bell_numbers(6), vec![1, 1, 2, 5, 15, 52, 203]);
    }

    #[test]
    fn single_pair_gives_two_singletons() {
        let parts = admissible_partitions(&[1]);
        assert_eq!(parts, vec![vec![0, 1]]);
        assert_eq!(superpartition(&parts[0]), vec![vec![0, 1]]);
    }

    proptest! {
        #[test]
        fn partitions_are_admissible_and_super_blocks_have_two(p in prop::collection::vec(1usize..=2, 1..=2)) {
            prop_assume!(p.iter().sum::<usize>() <= 4);
            let parts = admissible_partitions(&p);
            let mut seen = std::collections::HashSet::new();
            for labels in &parts {
                prop_assert!(seen.insert(labels.clone()));
                for pair in labels.chunks(2) {
                    prop_assert_ne!(pair[0], pair[1]);
                }
                let sp = superpartition(labels);
                prop_assert_eq!(sp.iter().map(Vec::len).sum::<usize>(), block_count(labels));
                prop_assert!(sp.iter().all(|s| s.len() >= 2));
            }
        }
    }
}
