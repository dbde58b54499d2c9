//! Nondeterministic computations modelled as sets of outcomes.
//!
//! A [`Nondet<T>`] is an immutable tree describing a set of values of type `T`.
//! `pure` is the singleton set, `bind` is the union of the continuation over
//! every outcome, and `choice` is set union. Leaves are either finite candidate
//! lists or predicate leaves, which carry an exact membership test together with
//! a lazy sampler, so that possibly infinite sets can be checked exactly and
//! enumerated under a budget.
//!
//! Three observers are provided:
//!
//! * [`Nondet::enumerate`] lists outcomes up to an [`EnumBudget`] and reports
//!   whether anything was cut off.
//! * [`Nondet::contains`] decides membership exactly. Predicate leaves answer
//!   through their membership function; a `bind` whose inner computation is not
//!   finite needs a witness function (see [`Nondet::bind_inverted`]).
//! * [`Nondet::sample`] executes one possible world, deterministically in the
//!   seed.

use std::collections::HashSet;
use std::fmt;
use std::hash::Hash;
use std::sync::Arc;

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Values that can live in an outcome set.
pub trait Outcome: Clone + Eq + Hash + fmt::Debug + Send + Sync + 'static {}

impl<T> Outcome for T where T: Clone + Eq + Hash + fmt::Debug + Send + Sync + 'static {}

/// Number of leading sampler values a predicate leaf draws from during
/// [`Nondet::sample`].
const SAMPLE_WINDOW: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NondetError {
    #[error("select over an empty candidate set")]
    EmptySelect,
    #[error("enumeration budget fields must be strictly positive")]
    InvalidBudget,
    #[error("membership undecidable: bind over predicate leaf `{0}` has no witness")]
    Undecidable(String),
}

/// Bounds applied by [`Nondet::enumerate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumBudget {
    max_outcomes: usize,
    max_predicate_samples: usize,
}

impl EnumBudget {
    pub fn new(max_outcomes: usize, max_predicate_samples: usize) -> Result<Self, NondetError> {
        if max_outcomes == 0 || max_predicate_samples == 0 {
            return Err(NondetError::InvalidBudget);
        }
        Ok(Self {
            max_outcomes,
            max_predicate_samples,
        })
    }

    pub fn max_outcomes(&self) -> usize {
        self.max_outcomes
    }

    pub fn max_predicate_samples(&self) -> usize {
        self.max_predicate_samples
    }
}

impl Default for EnumBudget {
    fn default() -> Self {
        Self {
            max_outcomes: 100_000,
            max_predicate_samples: 4,
        }
    }
}

/// Result of a bounded enumeration.
///
/// When `truncated` is false, `outcomes` is exactly the denoted set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration<T> {
    pub outcomes: Vec<T>,
    pub truncated: bool,
}

impl<T> Enumeration<T> {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

type Membership<T> = Arc<dyn Fn(&T) -> bool + Send + Sync>;
type Sampler<T> = Arc<dyn Fn() -> Box<dyn Iterator<Item = T>> + Send + Sync>;
type Continuation<S, T> = Arc<dyn Fn(S) -> Nondet<T> + Send + Sync>;
type Witness<S, T> = Arc<dyn Fn(&T) -> Vec<S> + Send + Sync>;

struct PredicateLeaf<T> {
    description: String,
    membership: Membership<T>,
    sampler: Sampler<T>,
}

enum Node<T: Outcome> {
    Empty,
    Return(T),
    Choice(Nondet<T>, Nondet<T>),
    Select(Vec<T>),
    Predicate(PredicateLeaf<T>),
    Bind(Box<dyn Bound<T>>),
}

/// A nondeterministic computation producing values of type `T`.
pub struct Nondet<T: Outcome>(Arc<Node<T>>);

impl<T: Outcome> Clone for Nondet<T> {
    fn clone(&self) -> Self {
        Nondet(Arc::clone(&self.0))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Flow {
    Continue,
    Stop,
}

/// Traversal state shared across one enumeration.
struct Walk {
    max_samples: usize,
    exact: bool,
    truncated: bool,
    undecidable: Option<String>,
}

type Sink<'a, T> = dyn FnMut(&mut Walk, T) -> Flow + 'a;
type Search<'a, T> = dyn FnMut(&mut ChaCha8Rng, T) -> bool + 'a;

/// Type-erased `bind` node: hides the intermediate outcome type.
trait Bound<T: Outcome>: Send + Sync {
    fn walk(&self, walk: &mut Walk, sink: &mut Sink<'_, T>) -> Flow;
    fn contains(&self, x: &T) -> Result<bool, NondetError>;
    fn search(&self, rng: &mut ChaCha8Rng, k: &mut Search<'_, T>) -> bool;
    fn describe(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result;
}

struct BindNode<S: Outcome, T: Outcome> {
    inner: Nondet<S>,
    cont: Continuation<S, T>,
    witness: Option<Witness<S, T>>,
}

impl<S: Outcome, T: Outcome> Bound<T> for BindNode<S, T> {
    fn walk(&self, walk: &mut Walk, sink: &mut Sink<'_, T>) -> Flow {
        let mut seen = HashSet::new();
        self.inner.walk(walk, &mut |walk, s: S| {
            if !seen.insert(s.clone()) {
                return Flow::Continue;
            }
            (self.cont)(s).walk(walk, sink)
        })
    }

    fn contains(&self, x: &T) -> Result<bool, NondetError> {
        match &self.witness {
            Some(witness) => {
                for s in witness(x) {
                    if self.inner.contains(&s)? && (self.cont)(s).contains(x)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            None => {
                for s in self.inner.enumerate_exact()? {
                    if (self.cont)(s).contains(x)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    fn search(&self, rng: &mut ChaCha8Rng, k: &mut Search<'_, T>) -> bool {
        self.inner
            .search(rng, &mut |rng, s: S| (self.cont)(s).search(rng, k))
    }

    fn describe(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bind({:?}, <continuation>)", self.inner)
    }
}

impl<T: Outcome> Nondet<T> {
    fn from_node(node: Node<T>) -> Self {
        Nondet(Arc::new(node))
    }

    /// The singleton computation `{x}`.
    pub fn pure(x: T) -> Self {
        Self::from_node(Node::Return(x))
    }

    /// The empty set: a computation without well-defined semantics.
    pub fn empty() -> Self {
        Self::from_node(Node::Empty)
    }

    /// Union of two computations.
    pub fn choice(a: Nondet<T>, b: Nondet<T>) -> Self {
        Self::from_node(Node::Choice(a, b))
    }

    /// Any one of `candidates`. Duplicates are dropped, keeping first occurrence order.
    pub fn select<I: IntoIterator<Item = T>>(candidates: I) -> Result<Self, NondetError> {
        let unique: IndexSet<T> = candidates.into_iter().collect();
        if unique.is_empty() {
            return Err(NondetError::EmptySelect);
        }
        Ok(Self::from_node(Node::Select(unique.into_iter().collect())))
    }

    /// Any value satisfying `membership`.
    ///
    /// `sampler` must yield only members, without repetition; enumeration treats
    /// its exhaustion as exhaustion of the set.
    pub fn select_where<M, G, I>(description: impl Into<String>, membership: M, sampler: G) -> Self
    where
        M: Fn(&T) -> bool + Send + Sync + 'static,
        G: Fn() -> I + Send + Sync + 'static,
        I: Iterator<Item = T> + 'static,
    {
        Self::from_node(Node::Predicate(PredicateLeaf {
            description: description.into(),
            membership: Arc::new(membership),
            sampler: Arc::new(move || Box::new(sampler()) as Box<dyn Iterator<Item = T>>),
        }))
    }

    /// Sequential composition: the union of `k(r)` over every outcome `r` of `self`.
    ///
    /// Membership checks on the result enumerate `self` exactly, so `self` must not
    /// reach a predicate leaf.
    pub fn bind<U, K>(self, k: K) -> Nondet<U>
    where
        U: Outcome,
        K: Fn(T) -> Nondet<U> + Send + Sync + 'static,
    {
        Nondet::from_node(Node::Bind(Box::new(BindNode {
            inner: self,
            cont: Arc::new(k),
            witness: None,
        })))
    }

    /// Like [`Nondet::bind`], with a witness function for exact membership over
    /// possibly infinite inner computations.
    ///
    /// `witness(x)` must return, for any `x` in the result, at least one inner
    /// outcome `r` with `x` in `k(r)`. Candidates are verified against both `self`
    /// and `k`, so a bad witness can only make membership answer `false`.
    pub fn bind_inverted<U, K, W>(self, k: K, witness: W) -> Nondet<U>
    where
        U: Outcome,
        K: Fn(T) -> Nondet<U> + Send + Sync + 'static,
        W: Fn(&U) -> Vec<T> + Send + Sync + 'static,
    {
        Nondet::from_node(Node::Bind(Box::new(BindNode {
            inner: self,
            cont: Arc::new(k),
            witness: Some(Arc::new(witness)),
        })))
    }

    pub fn map<U, F>(self, f: F) -> Nondet<U>
    where
        U: Outcome,
        F: Fn(T) -> U + Send + Sync + 'static,
    {
        self.bind(move |x| Nondet::pure(f(x)))
    }

    /// Bounded enumeration of the denoted set, duplicate-free, in traversal order.
    pub fn enumerate(&self, budget: EnumBudget) -> Enumeration<T> {
        let mut walk = Walk {
            max_samples: budget.max_predicate_samples,
            exact: false,
            truncated: false,
            undecidable: None,
        };
        let mut out: IndexSet<T> = IndexSet::new();
        self.walk(&mut walk, &mut |walk, v| {
            if out.contains(&v) {
                return Flow::Continue;
            }
            if out.len() >= budget.max_outcomes {
                walk.truncated = true;
                return Flow::Stop;
            }
            out.insert(v);
            Flow::Continue
        });
        Enumeration {
            outcomes: out.into_iter().collect(),
            truncated: walk.truncated,
        }
    }

    /// Unbounded enumeration; fails on any reachable predicate leaf.
    pub fn enumerate_exact(&self) -> Result<Vec<T>, NondetError> {
        let mut walk = Walk {
            max_samples: usize::MAX,
            exact: true,
            truncated: false,
            undecidable: None,
        };
        let mut out: IndexSet<T> = IndexSet::new();
        self.walk(&mut walk, &mut |_, v| {
            out.insert(v);
            Flow::Continue
        });
        match walk.undecidable {
            Some(desc) => Err(NondetError::Undecidable(desc)),
            None => Ok(out.into_iter().collect()),
        }
    }

    /// Exact membership test.
    pub fn contains(&self, x: &T) -> Result<bool, NondetError> {
        match &*self.0 {
            Node::Empty => Ok(false),
            Node::Return(v) => Ok(v == x),
            Node::Select(vs) => Ok(vs.contains(x)),
            Node::Predicate(p) => Ok((p.membership)(x)),
            Node::Choice(a, b) => match a.contains(x) {
                Ok(true) => Ok(true),
                Ok(false) => b.contains(x),
                Err(e) => match b.contains(x) {
                    Ok(true) => Ok(true),
                    _ => Err(e),
                },
            },
            Node::Bind(b) => b.contains(x),
        }
    }

    /// One possible outcome, chosen deterministically from `seed`.
    ///
    /// Branches are explored in a seed-dependent order with backtracking, so
    /// `None` is returned only when no member is reachable (predicate leaves
    /// contribute their first few sampler values).
    pub fn sample(&self, seed: u64) -> Option<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut found = None;
        self.search(&mut rng, &mut |_, v| {
            found = Some(v);
            true
        });
        found
    }

    fn walk(&self, walk: &mut Walk, sink: &mut Sink<'_, T>) -> Flow {
        match &*self.0 {
            Node::Empty => Flow::Continue,
            Node::Return(v) => sink(walk, v.clone()),
            Node::Choice(a, b) => {
                if a.walk(walk, sink) == Flow::Stop {
                    return Flow::Stop;
                }
                b.walk(walk, sink)
            }
            Node::Select(vs) => {
                for v in vs {
                    if sink(walk, v.clone()) == Flow::Stop {
                        return Flow::Stop;
                    }
                }
                Flow::Continue
            }
            Node::Predicate(p) => {
                if walk.exact {
                    walk.undecidable = Some(p.description.clone());
                    return Flow::Stop;
                }
                for (i, v) in (p.sampler)().enumerate() {
                    if i == walk.max_samples {
                        walk.truncated = true;
                        break;
                    }
                    debug_assert!((p.membership)(&v), "sampler of `{}` left its set", p.description);
                    if sink(walk, v) == Flow::Stop {
                        return Flow::Stop;
                    }
                }
                Flow::Continue
            }
            Node::Bind(b) => b.walk(walk, sink),
        }
    }

    fn search(&self, rng: &mut ChaCha8Rng, k: &mut Search<'_, T>) -> bool {
        match &*self.0 {
            Node::Empty => false,
            Node::Return(v) => k(rng, v.clone()),
            Node::Choice(a, b) => {
                if rng.gen_bool(0.5) {
                    a.search(rng, k) || b.search(rng, k)
                } else {
                    b.search(rng, k) || a.search(rng, k)
                }
            }
            Node::Select(vs) => {
                let mut order: Vec<usize> = (0..vs.len()).collect();
                order.shuffle(rng);
                order.into_iter().any(|i| k(rng, vs[i].clone()))
            }
            Node::Predicate(p) => {
                let mut window: Vec<T> = (p.sampler)().take(SAMPLE_WINDOW).collect();
                window.shuffle(rng);
                window.into_iter().any(|v| k(rng, v))
            }
            Node::Bind(b) => b.search(rng, k),
        }
    }
}

impl<T: Outcome> fmt::Debug for Nondet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Empty => write!(f, "Empty"),
            Node::Return(v) => write!(f, "Return({v:?})"),
            Node::Choice(a, b) => write!(f, "Choice({a:?}, {b:?})"),
            Node::Select(vs) => write!(f, "Select({vs:?})"),
            Node::Predicate(p) => write!(f, "SelectWhere({})", p.description),
            Node::Bind(b) => b.describe(f),
        }
    }
}

/// `select(codes) >>= (e -> pure(build(e)))`.
pub fn nondet_error<E, T, I, F>(codes: I, build: F) -> Result<Nondet<T>, NondetError>
where
    E: Outcome,
    T: Outcome,
    I: IntoIterator<Item = E>,
    F: Fn(E) -> T + Send + Sync + 'static,
{
    Ok(Nondet::select(codes)?.map(build))
}
