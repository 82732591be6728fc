//! Lambertian line-of-sight optical channel between the UAV's LED array and
//! photodiode-equipped ground users, plus bounded channel-estimation error.
//!
//! The LEDs are treated as co-located: every LED sees a user under the same
//! irradiance/incidence angles, so all rows of a user's column are equal.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Matrix, Position};

/// Receiver and emitter optics shared by all users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticsParams {
    /// LED half-power semi-angle, radians.
    pub half_power_semiangle: f64,
    /// Receiver field-of-view semi-angle, radians.
    pub fov_semiangle: f64,
    /// Photodiode detection area, m².
    pub pd_area: f64,
    /// Concentrator refractive index.
    pub refractive_index: f64,
}

impl OpticsParams {
    pub fn new(
        half_power_semiangle: f64,
        fov_semiangle: f64,
        pd_area: f64,
        refractive_index: f64,
    ) -> Result<Self> {
        if !(half_power_semiangle > 0.0 && half_power_semiangle < PI / 2.0) {
            return Err(Error::range(
                "half_power_semiangle",
                half_power_semiangle,
                "0 < Φ < π/2",
            ));
        }
        if !(fov_semiangle > 0.0 && fov_semiangle <= PI / 2.0) {
            return Err(Error::range("fov_semiangle", fov_semiangle, "0 < Ψ ≤ π/2"));
        }
        if !(pd_area > 0.0) {
            return Err(Error::range("pd_area", pd_area, "> 0"));
        }
        if !(refractive_index >= 0.0) {
            return Err(Error::range("refractive_index", refractive_index, ">= 0"));
        }
        Ok(OpticsParams {
            half_power_semiangle,
            fov_semiangle,
            pd_area,
            refractive_index,
        })
    }

    pub fn from_degrees(
        half_power_semiangle_deg: f64,
        fov_semiangle_deg: f64,
        pd_area: f64,
        refractive_index: f64,
    ) -> Result<Self> {
        Self::new(
            half_power_semiangle_deg.to_radians(),
            fov_semiangle_deg.to_radians(),
            pd_area,
            refractive_index,
        )
    }
}

/// True and estimated gains for one slot, N LEDs × K users.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub true_gain: Matrix,
    pub est_gain: Matrix,
    /// Receiver noise variance per user, A².
    pub noise_var: Vec<f64>,
    pub uncertainty_radius: f64,
}

impl ChannelState {
    pub fn n_leds(&self) -> usize {
        self.true_gain.rows()
    }

    pub fn n_users(&self) -> usize {
        self.true_gain.cols()
    }
}

/// Lambertian emission order `m = -ln 2 / ln cos Φ½`.
pub fn lambertian_order(half_power_semiangle: f64) -> Result<f64> {
    let c = half_power_semiangle.cos();
    if !(half_power_semiangle > 0.0 && half_power_semiangle < PI / 2.0 && c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!(
            "cos of half-power semi-angle {half_power_semiangle} rad must lie in (0, 1)"
        )));
    }
    Ok(-std::f64::consts::LN_2 / c.ln())
}

/// Optical concentrator gain at incidence angle `incidence` (radians).
///
/// Zero outside the receiver's field of view.
pub fn concentrator_gain(incidence: f64, optics: &OpticsParams) -> f64 {
    if (0.0..=optics.fov_semiangle).contains(&incidence) {
        let s = optics.fov_semiangle.sin();
        optics.refractive_index * optics.refractive_index / (s * s)
    } else {
        0.0
    }
}

/// DC gain of the line-of-sight link from the (co-located) LED array to a user.
///
/// Irradiance and incidence angles coincide for a downward-facing array and
/// an upward-facing photodiode: `cos ψ = cos φ = Δz / d`. A UAV at or below
/// the user yields zero gain.
pub fn los_channel_gain(uav: Position, user: Position, optics: &OpticsParams) -> Result<f64> {
    let d = uav.distance(user);
    if !(d > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "UAV at {uav} coincides with user at {user}"
        )));
    }
    let cos_angle = (uav.z - user.z) / d;
    if cos_angle <= 0.0 {
        return Ok(0.0);
    }
    let incidence = cos_angle.min(1.0).acos();
    let g = concentrator_gain(incidence, optics);
    if g == 0.0 {
        return Ok(0.0);
    }
    let m = lambertian_order(optics.half_power_semiangle)?;
    Ok((m + 1.0) * optics.pd_area / (2.0 * PI * d * d) * g * cos_angle.powf(m) * cos_angle)
}

/// N×K matrix of true gains for `n_leds` co-located LEDs.
pub fn channel_matrix(
    uav: Position,
    users: &[Position],
    optics: &OpticsParams,
    n_leds: usize,
) -> Result<Matrix> {
    if users.is_empty() {
        return Err(Error::Empty("user list"));
    }
    if n_leds == 0 {
        return Err(Error::Empty("LED array"));
    }
    let gains = users
        .iter()
        .map(|&u| los_channel_gain(uav, u, optics))
        .collect::<Result<Vec<_>>>()?;
    Ok(Matrix::from_fn(n_leds, users.len(), |_, k| gains[k]))
}

/// Adds independent `U[-δ, δ]` estimation error to every entry and clamps
/// the result at zero.
pub fn perturb_csi<R: Rng + ?Sized>(h: &Matrix, radius: f64, rng: &mut R) -> Matrix {
    if radius <= 0.0 {
        return h.clone();
    }
    h.map(|v| (v + rng.random_range(-radius..=radius)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_optics() -> OpticsParams {
        OpticsParams::from_degrees(60.0, 60.0, 1e-4, 1.5).unwrap()
    }

    #[test]
    fn lambertian_order_values() {
        let m60 = lambertian_order(60f64.to_radians()).unwrap();
        assert!((m60 - 1.0).abs() < 1e-12);
        let m45 = lambertian_order(45f64.to_radians()).unwrap();
        assert!((m45 - 2.0).abs() < 1e-12);
        assert!((m45 * 45f64.to_radians().cos().ln() + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn lambertian_order_grows_as_beam_narrows() {
        let mut prev = 0.0;
        for i in (1..90).rev() {
            let m = lambertian_order((i as f64).to_radians()).unwrap();
            assert!(m > prev, "order must grow as Φ shrinks");
            prev = m;
        }
    }

    #[test]
    fn lambertian_order_rejects_degenerate_angles() {
        assert!(lambertian_order(0.0).is_err());
        assert!(lambertian_order(PI / 2.0).is_err());
    }

    #[test]
    fn concentrator_examples() {
        let optics = reference_optics();
        let g = concentrator_gain(30f64.to_radians(), &optics);
        assert!((g - 3.0).abs() < 1e-12);
        assert_eq!(concentrator_gain(optics.fov_semiangle + 0.01, &optics), 0.0);
        let wide = OpticsParams::new(1.0, PI / 2.0, 1e-4, 1.0).unwrap();
        for deg in [0.0, 30.0, 89.9, 90.0] {
            assert!((concentrator_gain(f64::to_radians(deg), &wide) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nadir_gain_matches_hand_value() {
        let optics = reference_optics();
        let h = los_channel_gain(Vec3::new(0.0, 0.0, 10.0), Vec3::ZERO, &optics).unwrap();
        let expected = 2.0 * 1e-4 * 3.0 / (2.0 * PI * 100.0);
        assert!((h - expected).abs() / expected < 1e-12);
        assert!((h - 9.549e-7).abs() < 1e-10);
    }

    #[test]
    fn outside_fov_is_dark() {
        let optics = reference_optics();
        // 70° off-axis.
        let x = 10.0 * 70f64.to_radians().tan();
        let h = los_channel_gain(Vec3::new(x, 0.0, 10.0), Vec3::ZERO, &optics).unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn coincident_positions_error() {
        let optics = reference_optics();
        assert!(matches!(
            los_channel_gain(Vec3::ZERO, Vec3::ZERO, &optics),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn uav_below_user_is_dark() {
        let optics = reference_optics();
        let h = los_channel_gain(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 5.0), &optics);
        assert_eq!(h.unwrap(), 0.0);
    }

    #[test]
    fn matrix_columns_and_errors() {
        let optics = reference_optics();
        let uav = Vec3::new(0.0, 0.0, 10.0);
        let h = channel_matrix(uav, &[Vec3::ZERO], &optics, 3).unwrap();
        assert_eq!((h.rows(), h.cols()), (3, 1));
        for r in 0..3 {
            assert!((h[(r, 0)] - 9.549e-7).abs() < 1e-10);
        }
        assert!(matches!(
            channel_matrix(uav, &[], &optics, 3),
            Err(Error::Empty(_))
        ));
        assert!(channel_matrix(uav, &[Vec3::ZERO], &optics, 0).is_err());
    }

    #[test]
    fn matrix_is_permutation_equivariant() {
        let optics = reference_optics();
        let uav = Vec3::new(5.0, 5.0, 20.0);
        let users = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(8.0, 3.0, 0.0), Vec3::new(2.0, 9.0, 0.0)];
        let perm = [2usize, 0, 1];
        let permuted: Vec<_> = perm.iter().map(|&i| users[i]).collect();
        let h = channel_matrix(uav, &users, &optics, 4).unwrap();
        let hp = channel_matrix(uav, &permuted, &optics, 4).unwrap();
        for (new_col, &old_col) in perm.iter().enumerate() {
            assert_eq!(hp.column(new_col), h.column(old_col));
        }
    }

    #[test]
    fn perturbation_respects_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = Matrix::from_fn(4, 3, |r, c| 1e-7 * (r + c + 1) as f64);
        assert_eq!(perturb_csi(&h, 0.0, &mut rng), h);

        let zero = Matrix::zeros(5, 5);
        let est = perturb_csi(&zero, 1e-8, &mut rng);
        assert!(est.as_slice().iter().all(|&v| v >= 0.0));

        let delta = 3e-8;
        let mut worst: f64 = 0.0;
        let big = Matrix::from_fn(100, 10, |_, _| 1e-6);
        for _ in 0..100 {
            let est = perturb_csi(&big, delta, &mut rng);
            worst = worst.max(est.max_abs_diff(&big));
        }
        assert!(worst <= delta);
        // 10⁵ uniform draws should come close to the edge of the box.
        assert!(worst > 0.999 * delta);
    }
}
