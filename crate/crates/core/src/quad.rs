/// Default lattice size for deterministic time integrals.
pub const DEFAULT_NODES: usize = 10_000;

/// Composite trapezoid rule of `f` over `[a, b]` with `nodes` lattice points.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, nodes: usize) -> f64 {
    if b == a {
        return 0.0;
    }
    let n = nodes.max(2) - 1;
    let h = (b - a) / n as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for i in 1..n {
        acc += f(a + i as f64 * h);
    }
    acc * h
}
