//! Two-parameter Nelder–Mead on a box. Trial points are projected onto the
//! box in coordinates normalised to the unit square.

pub(crate) struct Outcome {
    pub x: [f64; 2],
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) struct Bounded<'a> {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub f: &'a (dyn Fn([f64; 2]) -> f64 + Sync),
}

impl Bounded<'_> {
    fn to_param(&self, u: [f64; 2]) -> [f64; 2] {
        [0, 1].map(|i| self.lo[i] + u[i].clamp(0.0, 1.0) * (self.hi[i] - self.lo[i]))
    }

    fn eval(&self, u: [f64; 2]) -> f64 {
        let v = (self.f)(self.to_param(u));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// Largest per-axis distance between simplex vertices, in parameter units.
    fn diameter(&self, s: &[[f64; 2]; 3]) -> f64 {
        let mut d = 0.0f64;
        for a in 0..3 {
            for b in a + 1..3 {
                for i in 0..2 {
                    d = d.max((s[a][i] - s[b][i]).abs() * (self.hi[i] - self.lo[i]));
                }
            }
        }
        d
    }

    pub fn minimize(&self, start: [f64; 2], step: [f64; 2], tol: f64, max_iter: usize) -> Outcome {
        let clamp = |u: [f64; 2]| u.map(|v| v.clamp(0.0, 1.0));
        let start = clamp(start);
        let mut s = [start, start, start];
        for i in 0..2 {
            let mut v = start;
            v[i] = if v[i] + step[i] <= 1.0 {
                v[i] + step[i]
            } else {
                v[i] - step[i]
            };
            s[i + 1] = v;
        }
        let mut fs = s.map(|u| self.eval(u));
        let mut it = 0;
        while it < max_iter {
            let mut idx = [0usize, 1, 2];
            idx.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]).then(a.cmp(&b)));
            s = idx.map(|i| s[i]);
            fs = idx.map(|i| fs[i]);
            if self.diameter(&s) < tol {
                return Outcome {
                    x: self.to_param(s[0]),
                    fx: fs[0],
                    iterations: it,
                    converged: true,
                };
            }
            it += 1;
            let c = [0.5 * (s[0][0] + s[1][0]), 0.5 * (s[0][1] + s[1][1])];
            let along = |t: f64| clamp([c[0] + t * (s[2][0] - c[0]), c[1] + t * (s[2][1] - c[1])]);
            let xr = along(-1.0);
            let fr = self.eval(xr);
            if fr < fs[0] {
                let xe = along(-2.0);
                let fe = self.eval(xe);
                if fe < fr {
                    s[2] = xe;
                    fs[2] = fe;
                } else {
                    s[2] = xr;
                    fs[2] = fr;
                }
                continue;
            }
            if fr < fs[1] {
                s[2] = xr;
                fs[2] = fr;
                continue;
            }
            let (xc, fc) = if fr < fs[2] {
                let x = along(-0.5);
                (x, self.eval(x))
            } else {
                let x = along(0.5);
                (x, self.eval(x))
            };
            if fc < fs[2].min(fr) {
                s[2] = xc;
                fs[2] = fc;
                continue;
            }
            for k in 1..3 {
                s[k] = [0.5 * (s[0][0] + s[k][0]), 0.5 * (s[0][1] + s[k][1])];
                fs[k] = self.eval(s[k]);
            }
        }
        let best = (0..3).min_by(|&a, &b| fs[a].total_cmp(&fs[b])).unwrap_or(0);
        Outcome {
            x: self.to_param(s[best]),
            fx: fs[best],
            iterations: it,
            converged: false,
        }
    }
}
