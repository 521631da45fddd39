use super::poly::{rat_to_f64, Poly};

/// Float evaluator for a [`Poly`], factored one variable at a time:
/// `p = Σ_k c_k(x2..xn) x1^k`, each `c_k` recursively factored in `x2`, …
#[derive(Clone, Debug)]
pub struct HornerPoly {
    root: Node,
}

#[derive(Clone, Debug)]
enum Node {
    Const(f64),
    Branch { var: usize, coeffs: Vec<Node> },
}

impl HornerPoly {
    pub fn new(p: &Poly) -> Self {
        let terms: Vec<(Vec<u32>, f64)> = p
            .terms()
            .map(|(m, c)| (m.exps().to_vec(), rat_to_f64(c)))
            .collect();
        HornerPoly {
            root: build(&terms, 0, p.num_vars()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.root.eval(x)
    }
}

fn build(terms: &[(Vec<u32>, f64)], var: usize, n: usize) -> Node {
    if terms.is_empty() {
        return Node::Const(0.0);
    }
    if var == n {
        return Node::Const(terms.iter().map(|t| t.1).sum());
    }
    let max = terms.iter().map(|t| t.0[var]).max().unwrap_or(0) as usize;
    if max == 0 {
        return build(terms, var + 1, n);
    }
    let mut buckets: Vec<Vec<(Vec<u32>, f64)>> = vec![Vec::new(); max + 1];
    for t in terms {
        buckets[t.0[var] as usize].push(t.clone());
    }
    Node::Branch {
        var,
        coeffs: buckets.iter().map(|b| build(b, var + 1, n)).collect(),
    }
}

impl Node {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Branch { var, coeffs } => {
                let xv = x[*var];
                coeffs.iter().rev().fold(0.0, |acc, c| acc * xv + c.eval(x))
            }
        }
    }
}
