use super::ModelError;

/// Dependency tree over token positions, given as one head per token.
///
/// `head_of[t]` is `None` for the single root. Children are kept in
/// ascending position order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepTree {
    head_of: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    // children before parents
    bottom_up: Vec<usize>,
}

impl DepTree {
    pub fn new(head_of: Vec<Option<usize>>) -> Result<Self, ModelError> {
        let n = head_of.len();
        if n == 0 {
            return Err(ModelError::Tree("empty tree".into()));
        }
        let roots: Vec<usize> = (0..n).filter(|&t| head_of[t].is_none()).collect();
        if roots.len() != 1 {
            return Err(ModelError::Tree(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let mut children = vec![Vec::new(); n];
        for (t, h) in head_of.iter().enumerate() {
            if let Some(h) = *h {
                if h >= n {
                    return Err(ModelError::Tree(format!(
                        "head {h} of token {t} is out of range"
                    )));
                }
                if h == t {
                    return Err(ModelError::Tree(format!("token {t} heads itself")));
                }
                children[h].push(t);
            }
        }
        for t in 0..n {
            let mut cur = t;
            let mut steps = 0;
            while let Some(h) = head_of[cur] {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(ModelError::Tree(format!("cycle through token {t}")));
                }
            }
        }
        let root = roots[0];
        let mut top_down = Vec::with_capacity(n);
        let mut stack = vec![root];
        while let Some(t) = stack.pop() {
            top_down.push(t);
            stack.extend(children[t].iter().rev());
        }
        let bottom_up = top_down.into_iter().rev().collect();
        Ok(DepTree {
            head_of,
            children,
            root,
            bottom_up,
        })
    }

    /// Parses CoNLL-style heads: 1-based positions with 0 for the root.
    pub fn from_conll_heads(heads: &[usize]) -> Result<Self, ModelError> {
        let head_of = heads
            .iter()
            .map(|&h| if h == 0 { None } else { Some(h - 1) })
            .collect();
        DepTree::new(head_of)
    }

    /// Chain where every token's only child is its left neighbour.
    pub fn chain(n: usize) -> Self {
        let head_of = (0..n).map(|t| if t + 1 < n { Some(t + 1) } else { None }).collect();
        DepTree::new(head_of).expect("a chain is a valid tree")
    }

    pub fn len(&self) -> usize {
        self.head_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head_of.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn head_of(&self) -> &[Option<usize>] {
        &self.head_of
    }

    pub fn conll_heads(&self) -> Vec<usize> {
        self.head_of.iter().map(|h| h.map_or(0, |h| h + 1)).collect()
    }

    pub fn children(&self, t: usize) -> &[usize] {
        &self.children[t]
    }

    pub fn parent(&self, t: usize) -> Option<usize> {
        self.head_of[t]
    }

    pub fn bottom_up(&self) -> &[usize] {
        &self.bottom_up
    }

    pub fn top_down(&self) -> impl Iterator<Item = usize> + '_ {
        self.bottom_up.iter().rev().copied()
    }
}
