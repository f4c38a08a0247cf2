use crate::geo::{GridSpec, ProjectedPoint};
use crate::rng::DetRng;

#[derive(Debug, Clone, Copy)]
struct Bump {
    x: f64,
    y: f64,
    sigma: f64,
    amp: f64,
}

/// Smooth positive surface over the grid: a floor plus Gaussian bumps,
/// scaled so its maximum over cell centres is 1.
#[derive(Debug, Clone)]
pub struct Field {
    bumps: Vec<Bump>,
    floor: f64,
    scale: f64,
}

impl Field {
    pub fn random(grid: &GridSpec, n_bumps: usize, rng: &mut DetRng) -> Field {
        let [x0, y0, x1, y1] = grid.extent();
        let span = (x1 - x0).min(y1 - y0);
        let bumps = (0..n_bumps)
            .map(|_| Bump {
                x: rng.uniform_range(x0, x1),
                y: rng.uniform_range(y0, y1),
                sigma: rng.uniform_range(0.04, 0.16) * span,
                amp: rng.uniform_range(0.4, 1.0),
            })
            .collect();
        let mut f = Field {
            bumps,
            floor: 0.03,
            scale: 1.0,
        };
        let max = grid.cells().map(|c| f.eval(grid.cell_center(c))).fold(0.0, f64::max);
        f.scale = 1.0 / max;
        f
    }

    pub fn eval(&self, p: ProjectedPoint) -> f64 {
        let raw: f64 = self
            .bumps
            .iter()
            .map(|b| {
                let d2 = (p.x - b.x).powi(2) + (p.y - b.y).powi(2);
                b.amp * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
            })
            .sum();
        (self.floor + raw) * self.scale
    }
}

/// `w * latent + (1 - w) * own`
pub struct Mixed<'a> {
    pub latent: &'a Field,
    pub own: Field,
    pub weight: f64,
}

impl Mixed<'_> {
    pub fn eval(&self, p: ProjectedPoint) -> f64 {
        self.weight * self.latent.eval(p) + (1.0 - self.weight) * self.own.eval(p)
    }
}
