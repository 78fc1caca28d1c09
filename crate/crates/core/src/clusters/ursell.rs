//! Ursell coefficients of polymer multisets.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;

use super::{conflicts, ClusterContext, SpaceTimeCluster};

/// Reduced fraction with positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i64,
    den: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Rational {
            num: s * num / g,
            den: s * den / g,
        }
    }

    pub fn numer(&self) -> i64 {
        self.num
    }

    pub fn denom(&self) -> i64 {
        self.den
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

thread_local! {
    static CACHE: RefCell<HashMap<Vec<u32>, i64>> = RefCell::new(HashMap::new());
}

/// `sum over connected spanning subgraphs of (-1)^{#edges}` for the graph on
/// `n = adjacency.len()` vertices given as neighbour bitmasks.
///
/// Uses the subset recursion `c(S) = f(S) - sum_{T ⊊ S, min S ∈ T} c(T) f(S \ T)`,
/// where `f(S)` is the signed count of all spanning subgraphs of the graph
/// induced on `S` (1 when `S` has no internal edge, 0 otherwise).
pub fn connected_signed_sum(adjacency: &[u32]) -> i64 {
    let n = adjacency.len();
    assert!(n <= 20, "Ursell recursion is exponential; n = {n} is out of range");
    if n == 0 {
        return 0;
    }
    if let Some(v) = CACHE.with(|c| c.borrow().get(adjacency).copied()) {
        return v;
    }
    let full = (1u32 << n) - 1;
    let edgeless = |s: u32| -> bool {
        let mut rest = s;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if adjacency[v] & s != 0 {
                return false;
            }
        }
        true
    };
    let f = |s: u32| i64::from(edgeless(s));
    let mut c = vec![0i64; 1 << n];
    for s in 1..=full {
        let low = s & s.wrapping_neg();
        let rest = s ^ low;
        let mut total = f(s);
        // Proper subsets T of S containing the lowest element.
        let mut sub = rest;
        loop {
            let t = sub | low;
            if t != s {
                total -= c[t as usize] * f(s ^ t);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        c[s as usize] = total;
    }
    let out = c[full as usize];
    CACHE.with(|c| c.borrow_mut().insert(adjacency.to_vec(), out));
    out
}

/// Ursell coefficient of a multiset given its conflict graph and the
/// multiplicities of its distinct members.
pub fn ursell_coefficient_for_graph(adjacency: &[u32], multiplicities: &[usize]) -> Rational {
    let signed = connected_signed_sum(adjacency);
    let den: i64 = multiplicities
        .iter()
        .map(|&m| (1..=m as i64).product::<i64>())
        .product();
    Rational::new(signed, den)
}

/// `C(Γ_1, ..., Γ_n)` for a multiset of polymers (repeats allowed).
///
/// Returns zero when the conflict graph is disconnected.
pub fn ursell_coefficient(gs: &[SpaceTimeCluster], ctx: &ClusterContext) -> Rational {
    assert!(!gs.is_empty(), "Ursell coefficient of an empty collection");
    let n = gs.len();
    let mut adjacency = vec![0u32; n];
    for a in 0..n {
        for b in 0..n {
            if a != b && (gs[a] == gs[b] || conflicts(&gs[a], &gs[b], ctx)) {
                adjacency[a] |= 1 << b;
            }
        }
    }
    let mut mult: Vec<usize> = Vec::new();
    let mut sorted: Vec<&SpaceTimeCluster> = gs.iter().collect();
    sorted.sort();
    let mut run = 1;
    for k in 1..=n {
        if k < n && sorted[k] == sorted[k - 1] {
            run += 1;
        } else {
            mult.push(run);
            run = 1;
        }
    }
    ursell_coefficient_for_graph(&adjacency, &mult)
}
