//! Newick serialization. Branch lengths are time differences and leaf
//! labels are language names; internal nodes are unlabeled.

use super::CoalTree;
use crate::error::{Error, Result};

fn quote(name: &str) -> String {
    let plain = !name.is_empty()
        && name
            .chars()
            .all(|c| !c.is_whitespace() && !"(),:;'[]".contains(c));
    if plain {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}

pub fn to_newick<S: AsRef<str>>(tree: &CoalTree, names: &[S]) -> String {
    fn write<S: AsRef<str>>(tree: &CoalTree, names: &[S], u: usize, out: &mut String) {
        match tree.node(u).children {
            None => out.push_str(&quote(names[u].as_ref())),
            Some([a, b]) => {
                out.push('(');
                write(tree, names, a, out);
                out.push(',');
                write(tree, names, b, out);
                out.push(')');
            }
        }
        if tree.node(u).parent.is_some() {
            out.push(':');
            out.push_str(&tree.branch_length(u).to_string());
        }
    }
    let mut out = String::new();
    write(tree, names, tree.root(), &mut out);
    out.push(';');
    out
}

enum Parsed {
    Leaf(String, f64),
    Internal(Box<Parsed>, Box<Parsed>, f64),
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Newick(format!("{msg} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn label(&mut self) -> Result<String> {
        if self.peek() == Some(b'\'') {
            self.pos += 1;
            let mut out = Vec::new();
            loop {
                match self.s.get(self.pos) {
                    None => return Err(self.err("unterminated quoted label")),
                    Some(b'\'') if self.s.get(self.pos + 1) == Some(&b'\'') => {
                        out.push(b'\'');
                        self.pos += 2;
                    }
                    Some(b'\'') => {
                        self.pos += 1;
                        break;
                    }
                    Some(&c) => {
                        out.push(c);
                        self.pos += 1;
                    }
                }
            }
            return String::from_utf8(out).map_err(|_| self.err("label is not UTF-8"));
        }
        let start = self.pos;
        while self.pos < self.s.len() && !b"(),:;".contains(&self.s[self.pos]) {
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.s[start..self.pos]).trim().to_string())
    }

    fn length(&mut self) -> Result<f64> {
        if self.peek() != Some(b':') {
            return Ok(0.0);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && !b"(),:;".contains(&self.s[self.pos]) {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("").trim();
        text.parse()
            .map_err(|_| self.err(&format!("bad branch length `{text}`")))
    }

    fn node(&mut self) -> Result<Parsed> {
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let a = self.node()?;
            self.expect(b',')?;
            let b = self.node()?;
            if self.peek() == Some(b',') {
                return Err(self.err("only binary trees are supported"));
            }
            self.expect(b')')?;
            let _ = self.label()?;
            let len = self.length()?;
            Ok(Parsed::Internal(Box::new(a), Box::new(b), len))
        } else {
            let name = self.label()?;
            if name.is_empty() {
                return Err(self.err("empty leaf label"));
            }
            let len = self.length()?;
            Ok(Parsed::Leaf(name, len))
        }
    }
}

/// Parses a binary ultrametric Newick tree whose leaf labels are exactly
/// `names` (in any order). Leaf `i` of the result is `names[i]`.
pub fn from_newick<S: AsRef<str>>(text: &str, names: &[S]) -> Result<CoalTree> {
    let mut p = Parser {
        s: text.as_bytes(),
        pos: 0,
    };
    let root = p.node()?;
    p.expect(b';')?;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }

    // depth below the root for every node, in post-order
    struct Built {
        merges: Vec<(usize, usize, f64)>,
        leaf_depth: Vec<Option<f64>>,
    }
    let n = names.len();
    let mut built = Built {
        merges: Vec::new(),
        leaf_depth: vec![None; n],
    };
    // returns (node id, depth); internal ids are assigned after the tree is
    // collected so that children precede parents
    fn walk<S: AsRef<str>>(
        node: &Parsed,
        depth: f64,
        names: &[S],
        built: &mut Built,
        internal: &mut Vec<(usize, usize, f64)>,
    ) -> Result<usize> {
        match node {
            Parsed::Leaf(name, len) => {
                let i = names
                    .iter()
                    .position(|x| x.as_ref() == name)
                    .ok_or_else(|| Error::Newick(format!("unknown leaf `{name}`")))?;
                if built.leaf_depth[i].is_some() {
                    return Err(Error::Newick(format!("leaf `{name}` appears twice")));
                }
                built.leaf_depth[i] = Some(depth + len);
                Ok(i)
            }
            Parsed::Internal(a, b, len) => {
                let d = depth + len;
                let ia = walk(a, d, names, built, internal)?;
                let ib = walk(b, d, names, built, internal)?;
                internal.push((ia, ib, d));
                Ok(names.len() + internal.len() - 1)
            }
        }
    }
    let mut internal = Vec::new();
    walk(&root, 0.0, names, &mut built, &mut internal)?;
    let depths: Vec<f64> = built
        .leaf_depth
        .iter()
        .enumerate()
        .map(|(i, d)| d.ok_or_else(|| Error::Newick(format!("leaf `{}` missing", names[i].as_ref()))))
        .collect::<Result<_>>()?;
    let height = depths.iter().copied().fold(0.0, f64::max);
    if depths.iter().any(|d| (d - height).abs() > 1e-6 * height.max(1.0)) {
        return Err(Error::Newick("tree is not ultrametric".into()));
    }
    built.merges = internal
        .into_iter()
        .map(|(a, b, d)| (a, b, d - height))
        .collect();
    // The root sits at depth 0 and so at time -height.
    CoalTree::from_merges(n, &built.merges)
}

#[cfg(test)]
mod tests {
    use super::super::sample_prior_tree;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn writes_expected_text() {
        let tree = CoalTree::from_merges(3, &[(0, 1, -0.5), (3, 2, -2.0)]).unwrap();
        let s = to_newick(&tree, &["English", "Greek (Modern)", "Irish"]);
        assert_eq!(s, "((English:0.5,'Greek (Modern)':0.5):1.5,Irish:2);");
    }

    #[test]
    fn round_trip_preserves_topology_and_times() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let names: Vec<String> = (0..9).map(|i| format!("lang {i}'s")).collect();
        let tree = sample_prior_tree(9, &mut rng).unwrap();
        let back = from_newick(&to_newick(&tree, &names), &names).unwrap();
        assert!(back.is_valid());
        let sets = |t: &CoalTree| {
            let mut v: Vec<(Vec<usize>, i64)> = t
                .internal_nodes()
                .map(|u| (t.leaves_under(u), (t.node(u).time * 1e9).round() as i64))
                .collect();
            v.sort();
            v
        };
        assert_eq!(sets(&tree), sets(&back));
    }

    #[test]
    fn rejects_malformed_input() {
        let names = ["a", "b", "c"];
        for bad in ["((a:1,b:1):1,c:2)", "((a:1,b:1,c:1));", "((a:1,b:1):1,d:2);", "((a:1,b:2):1,c:2);"] {
            assert!(from_newick(bad, &names).is_err(), "{bad}");
        }
    }
}
