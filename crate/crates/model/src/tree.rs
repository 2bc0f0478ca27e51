//! Token distances on the dependency tree, for attention supervision.

use std::collections::VecDeque;

use posh_core::conllu::SentenceRecord;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("sentence {id:?}: token {index} is unreachable from the root")]
    Disconnected { id: String, index: usize },
    #[error("sentence has no tokens")]
    Empty,
}

/// Symmetric shortest-path distances between the tokens of one sentence,
/// edges undirected with unit weight. Flat row-major n*n.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeDistanceMatrix {
    pub n: usize,
    pub d: Vec<u16>,
}

/// Marks position pairs outside the supervised support after expansion.
pub const EXCLUDED: u16 = u16::MAX;

impl TreeDistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> u16 {
        self.d[i * self.n + j]
    }

    /// All positions excluded; used for sequences without a parse.
    pub fn excluded(n: usize) -> TreeDistanceMatrix {
        TreeDistanceMatrix {
            n,
            d: vec![EXCLUDED; n * n],
        }
    }

    /// Maps token distances onto sequence positions: each position inherits
    /// its token's row and column, positions without a token (bos, eos,
    /// padding) are excluded.
    pub fn expand(&self, position_token: &[Option<usize>]) -> TreeDistanceMatrix {
        let n = position_token.len();
        let mut d = vec![EXCLUDED; n * n];
        for (a, ta) in position_token.iter().enumerate() {
            let Some(ta) = ta else { continue };
            for (b, tb) in position_token.iter().enumerate() {
                let Some(tb) = tb else { continue };
                d[a * n + b] = self.get(*ta, *tb);
            }
        }
        TreeDistanceMatrix { n, d }
    }
}

/// BFS over the undirected dependency edges.
pub fn tree_distances_from_parse(s: &SentenceRecord) -> Result<TreeDistanceMatrix, TreeError> {
    let n = s.tokens.len();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    let mut adj = vec![Vec::new(); n];
    for tok in &s.tokens {
        if tok.head != 0 {
            let a = tok.index - 1;
            let b = tok.head - 1;
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut d = vec![EXCLUDED; n * n];
    for start in 0..n {
        let row = &mut d[start * n..(start + 1) * n];
        row[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if row[v] == EXCLUDED {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        if let Some(index) = row.iter().position(|&x| x == EXCLUDED) {
            return Err(TreeError::Disconnected {
                id: s.id.clone(),
                index: index + 1,
            });
        }
    }
    Ok(TreeDistanceMatrix { n, d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use posh_core::conllu::read_conllu;

    fn record(text: &str) -> SentenceRecord {
        read_conllu(text.as_bytes(), "t").unwrap().remove(0)
    }

    #[test]
    fn single_token_is_zero() {
        let s = record(
            "# sent_id = s1\n# text = hi\n1\thi\t_\tINTJ\t_\t_\t0\troot\t_\t_\n\n",
        );
        let m = tree_distances_from_parse(&s).unwrap();
        assert_eq!(m.d, vec![0]);
    }

    #[test]
    fn chain_and_star_distances() {
        // chain: 1 <- 2 <- 3
        let chain = record(
            "# sent_id = c\n# text = a b c\n\
             1\ta\t_\tNOUN\t_\t_\t2\tnsubj\t_\t_\n\
             2\tb\t_\tVERB\t_\t_\t0\troot\t_\t_\n\
             3\tc\t_\tNOUN\t_\t_\t2\tobj\t_\t_\n\n",
        );
        let m = tree_distances_from_parse(&chain).unwrap();
        assert_eq!(m.get(0, 2), 2);
        assert_eq!(m.get(2, 0), 2);
        assert_eq!(m.get(0, 1), 1);
        // star: root 1 with children 2, 3, 4
        let star = record(
            "# sent_id = s\n# text = r a b c\n\
             1\tr\t_\tVERB\t_\t_\t0\troot\t_\t_\n\
             2\ta\t_\tNOUN\t_\t_\t1\tobj\t_\t_\n\
             3\tb\t_\tNOUN\t_\t_\t1\tobj\t_\t_\n\
             4\tc\t_\tNOUN\t_\t_\t1\tobj\t_\t_\n\n",
        );
        let m = tree_distances_from_parse(&star).unwrap();
        for i in 1..4 {
            for j in 1..4 {
                if i != j {
                    assert_eq!(m.get(i, j), 2);
                }
            }
        }
    }

    #[test]
    fn expansion_inherits_token_rows() {
        let chain = record(
            "# sent_id = c\n# text = a b c\n\
             1\ta\t_\tNOUN\t_\t_\t2\tnsubj\t_\t_\n\
             2\tb\t_\tVERB\t_\t_\t0\troot\t_\t_\n\
             3\tc\t_\tNOUN\t_\t_\t2\tobj\t_\t_\n\n",
        );
        let m = tree_distances_from_parse(&chain).unwrap();
        // bos, a, b split in two pieces, c
        let e = m.expand(&[None, Some(0), Some(1), Some(1), Some(2)]);
        assert_eq!(e.get(0, 1), EXCLUDED);
        assert_eq!(e.get(2, 3), 0);
        assert_eq!(e.get(1, 4), 2);
        assert_eq!(e.get(3, 4), 1);
    }
}
