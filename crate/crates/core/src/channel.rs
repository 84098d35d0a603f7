//! Channel realizations: fixed-aperture ULA under line-of-sight free-space
//! propagation, and i.i.d. Rayleigh fading.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::CMat;
use crate::{Error, Result};

/// Uniform linear array of fixed physical length.
///
/// The element spacing follows from the aperture: `aperture / (B λ_c)`
/// wavelengths, so changing `B` thins or densifies the same array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    num_antennas: usize,
    aperture: f64,
    wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(num_antennas: usize, aperture: f64, wavelength: f64) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::domain("array needs at least one antenna"));
        }
        if !(aperture > 0.0 && aperture.is_finite()) {
            return Err(Error::domain(format!(
                "aperture must be positive, got {aperture}"
            )));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::domain(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        Ok(Self {
            num_antennas,
            aperture,
            wavelength,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Element spacing in wavelengths.
    pub fn spacing_wavelengths(&self) -> f64 {
        self.aperture / (self.num_antennas as f64 * self.wavelength)
    }
}

/// Annular sector in which users are dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRegion {
    pub d_min: f64,
    pub d_max: f64,
    pub azimuth_min_deg: f64,
    pub azimuth_max_deg: f64,
}

impl CellRegion {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_min > 0.0 && self.d_min.is_finite()) {
            return Err(Error::domain(format!(
                "d_min must be positive, got {}",
                self.d_min
            )));
        }
        if !(self.d_max >= self.d_min && self.d_max.is_finite()) {
            return Err(Error::domain(format!(
                "d_max ({}) must not be below d_min ({})",
                self.d_max, self.d_min
            )));
        }
        if !(self.azimuth_min_deg < self.azimuth_max_deg) {
            return Err(Error::domain(format!(
                "azimuth range ({}, {}) is empty",
                self.azimuth_min_deg, self.azimuth_max_deg
            )));
        }
        Ok(())
    }

    /// Average user distance; SNRs are quoted for a user at this distance.
    pub fn average_distance(&self) -> Result<f64> {
        average_distance(self.d_min, self.d_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserPosition {
    pub distance: f64,
    pub azimuth_deg: f64,
}

/// One random placement of all users.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDrop {
    pub positions: Vec<UserPosition>,
    /// Free-space path gain per user (linear).
    pub pathloss: Vec<f64>,
    /// Path gain relative to a user at the average distance, `(d_avg/d)^2`.
    pub snr_scale: Vec<f64>,
}

impl UserDrop {
    pub fn num_users(&self) -> usize {
        self.positions.len()
    }
}

/// Mean distance of a point drawn uniformly in area from the ring
/// `d_min <= d <= d_max`. Collapses to `d_min` for a degenerate ring.
pub fn average_distance(d_min: f64, d_max: f64) -> Result<f64> {
    if !(d_min > 0.0 && d_max >= d_min && d_max.is_finite()) {
        return Err(Error::domain(format!(
            "invalid distance range ({d_min}, {d_max})"
        )));
    }
    let (a, b) = (d_min, d_max);
    if (b - a) <= 1e-12 * b {
        return Ok(a);
    }
    // (d_max^3 - d_min^3) / (d_max^2 - d_min^2) after cancelling (b - a).
    Ok(2.0 / 3.0 * (a * a + a * b + b * b) / (a + b))
}

/// Free-space path gain `(λ / (4π d))^2`.
pub fn free_space_pathloss(distance: f64, wavelength: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::domain(format!(
            "distance must be positive, got {distance}"
        )));
    }
    let r = wavelength / (4.0 * PI * distance);
    Ok(r * r)
}

/// Drops `num_users` users uniformly in area over `region`.
pub fn sample_drop<R: Rng + ?Sized>(
    rng: &mut R,
    num_users: usize,
    region: &CellRegion,
    wavelength: f64,
) -> Result<UserDrop> {
    region.validate()?;
    let d_avg = region.average_distance()?;
    let (d2_min, d2_max) = (region.d_min * region.d_min, region.d_max * region.d_max);
    let mut positions = Vec::with_capacity(num_users);
    let mut pathloss = Vec::with_capacity(num_users);
    let mut snr_scale = Vec::with_capacity(num_users);
    for _ in 0..num_users {
        let u: f64 = rng.random();
        let distance = (d2_min + u * (d2_max - d2_min))
            .sqrt()
            .clamp(region.d_min, region.d_max);
        let azimuth_deg = rng.random_range(region.azimuth_min_deg..region.azimuth_max_deg);
        positions.push(UserPosition {
            distance,
            azimuth_deg,
        });
        pathloss.push(free_space_pathloss(distance, wavelength)?);
        let r = d_avg / distance;
        snr_scale.push(r * r);
    }
    Ok(UserDrop {
        positions,
        pathloss,
        snr_scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelModel {
    LosUla,
    IidRayleigh,
}

/// A `B x U` channel matrix together with what produced it.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: CMat,
    /// User placement; absent for Rayleigh fading.
    pub drop: Option<UserDrop>,
    pub model: ChannelModel,
}

impl ChannelRealization {
    /// Channel with each user's column rescaled so that a user at the
    /// reference distance has unit per-antenna gain. Entries then satisfy
    /// `|h_bu|^2 = snr_scale[u]` for line-of-sight channels.
    pub fn normalized_to(&self, reference_pathloss: f64) -> CMat {
        &self.h * Complex64::new(1.0 / reference_pathloss.sqrt(), 0.0)
    }
}

/// Far-field ULA response `e^{j 2π δ b cos φ}`, phase referenced to element 0.
pub fn steering_vector(
    num_antennas: usize,
    spacing_wavelengths: f64,
    azimuth_deg: f64,
) -> Vec<Complex64> {
    let k = 2.0 * PI * spacing_wavelengths * azimuth_deg.to_radians().cos();
    (0..num_antennas)
        .map(|b| Complex64::from_polar(1.0, k * b as f64))
        .collect()
}

/// Line-of-sight channel `H[b,u] = sqrt(β_u) e^{j 2π δ b cos φ_u}`.
pub fn los_channel(geometry: &ArrayGeometry, drop: &UserDrop) -> ChannelRealization {
    let b = geometry.num_antennas();
    let spacing = geometry.spacing_wavelengths();
    let mut h = CMat::zeros(b, drop.num_users());
    for (u, (pos, beta)) in drop.positions.iter().zip(&drop.pathloss).enumerate() {
        let amp = beta.sqrt();
        for (row, a) in steering_vector(b, spacing, pos.azimuth_deg)
            .into_iter()
            .enumerate()
        {
            h[(row, u)] = a * amp;
        }
    }
    ChannelRealization {
        h,
        drop: Some(drop.clone()),
        model: ChannelModel::LosUla,
    }
}

/// `CN(0, 1)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Channel with i.i.d. `CN(0, 1)` entries.
pub fn rayleigh_channel<R: Rng + ?Sized>(
    rng: &mut R,
    num_antennas: usize,
    num_users: usize,
) -> Result<ChannelRealization> {
    if num_antennas == 0 || num_users == 0 {
        return Err(Error::domain("channel dimensions must be positive"));
    }
    let h = CMat::from_fn(num_antennas, num_users, |_, _| complex_normal(rng));
    Ok(ChannelRealization {
        h,
        drop: None,
        model: ChannelModel::IidRayleigh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{column, inner, norm_sqr};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_region() -> CellRegion {
        CellRegion {
            d_min: 50.0,
            d_max: 150.0,
            azimuth_min_deg: 30.0,
            azimuth_max_deg: 150.0,
        }
    }

    #[test]
    fn drop_stays_in_region() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let drop = sample_drop(&mut rng, 8, &reference_region(), 0.01).unwrap();
        assert_eq!(drop.num_users(), 8);
        for p in &drop.positions {
            assert!((50.0..=150.0).contains(&p.distance));
            assert!(p.azimuth_deg > 30.0 && p.azimuth_deg < 150.0);
        }
        for (beta, p) in drop.pathloss.iter().zip(&drop.positions) {
            assert!(*beta > 0.0);
            assert_relative_eq!(*beta, free_space_pathloss(p.distance, 0.01).unwrap());
        }
    }

    #[test]
    fn degenerate_ring() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let region = CellRegion {
            d_min: 100.0,
            d_max: 100.0,
            ..reference_region()
        };
        let drop = sample_drop(&mut rng, 5, &region, 0.01).unwrap();
        assert!(drop.positions.iter().all(|p| p.distance == 100.0));
        assert!(drop.snr_scale.iter().all(|s| *s == 1.0));
    }

    #[test]
    fn invalid_region_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bad = CellRegion {
            d_min: 0.0,
            ..reference_region()
        };
        assert!(sample_drop(&mut rng, 1, &bad, 0.01).is_err());
        let bad = CellRegion {
            d_min: 200.0,
            ..reference_region()
        };
        assert!(sample_drop(&mut rng, 1, &bad, 0.01).is_err());
        let bad = CellRegion {
            azimuth_min_deg: 150.0,
            azimuth_max_deg: 30.0,
            ..reference_region()
        };
        assert!(sample_drop(&mut rng, 1, &bad, 0.01).is_err());
    }

    #[test]
    fn uniform_in_area_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let drop = sample_drop(&mut rng, n, &reference_region(), 0.01).unwrap();
        let m2 = drop
            .positions
            .iter()
            .map(|p| p.distance * p.distance)
            .sum::<f64>()
            / n as f64;
        assert!((m2 / 12_500.0 - 1.0).abs() < 0.01, "{m2}");
        let mean = drop.positions.iter().map(|p| p.distance).sum::<f64>() / n as f64;
        let d_avg = average_distance(50.0, 150.0).unwrap();
        assert!((mean / d_avg - 1.0).abs() < 0.005, "{mean} vs {d_avg}");
    }

    #[test]
    fn average_distance_examples() {
        // (2/3)(150^3 - 50^3)/(150^2 - 50^2) = (2/3)(3250000/20000)
        assert_relative_eq!(
            average_distance(50.0, 150.0).unwrap(),
            108.333_333_333_333_33,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            average_distance(1.0, 2.0).unwrap(),
            14.0 / 9.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            average_distance(10.0, 10.0 + 1e-9).unwrap(),
            10.0,
            max_relative = 1e-9
        );
        assert!(average_distance(0.0, 1.0).is_err());
    }

    #[test]
    fn pathloss_examples() {
        let lambda = 0.01;
        assert_relative_eq!(
            free_space_pathloss(lambda / (4.0 * PI), lambda).unwrap(),
            1.0,
            max_relative = 1e-14
        );
        let b1 = free_space_pathloss(20.0, lambda).unwrap();
        let b2 = free_space_pathloss(40.0, lambda).unwrap();
        assert_relative_eq!(b2, b1 / 4.0, max_relative = 1e-14);
        let b = free_space_pathloss(108.333, lambda).unwrap();
        assert!((b / 5.40e-11 - 1.0).abs() < 1e-3, "{b}");
        assert!(free_space_pathloss(0.0, lambda).is_err());
    }

    #[test]
    fn snr_scale_is_one_at_reference() {
        let region = reference_region();
        let d_avg = region.average_distance().unwrap();
        let ring = CellRegion {
            d_min: d_avg,
            d_max: d_avg,
            ..region
        };
        // A degenerate ring at d_avg reproduces the reference point.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let drop = sample_drop(&mut rng, 3, &ring, 0.01).unwrap();
        assert!(drop.snr_scale.iter().all(|s| (*s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fixed_aperture_law() {
        for b in [32, 64, 85, 128, 256] {
            let g = ArrayGeometry::new(b, 1.28, 0.01).unwrap();
            assert_relative_eq!(
                g.spacing_wavelengths() * b as f64,
                128.0,
                max_relative = 1e-14
            );
        }
    }

    fn single_user_drop(distance: f64, azimuth_deg: f64) -> UserDrop {
        UserDrop {
            positions: vec![UserPosition {
                distance,
                azimuth_deg,
            }],
            pathloss: vec![free_space_pathloss(distance, 0.01).unwrap()],
            snr_scale: vec![1.0],
        }
    }

    #[test]
    fn broadside_column_is_constant() {
        let g = ArrayGeometry::new(16, 1.28, 0.01).unwrap();
        let drop = single_user_drop(100.0, 90.0);
        let h = los_channel(&g, &drop).h;
        let amp = drop.pathloss[0].sqrt();
        for b in 0..16 {
            assert!((h[(b, 0)] - Complex64::new(amp, 0.0)).norm() < 1e-12 * amp);
        }
    }

    #[test]
    fn steering_phase_step() {
        // Aperture 1 wavelength over 2 elements: spacing 0.5 λ.
        let g = ArrayGeometry::new(2, 0.01, 0.01).unwrap();
        assert_relative_eq!(g.spacing_wavelengths(), 0.5);
        let h = los_channel(&g, &single_user_drop(10.0, 60.0)).h;
        let dphi = (h[(1, 0)] / h[(0, 0)]).arg();
        assert_relative_eq!(dphi, PI / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn same_azimuth_columns_are_parallel() {
        let g = ArrayGeometry::new(32, 1.28, 0.01).unwrap();
        let mut drop = single_user_drop(60.0, 70.0);
        let second = single_user_drop(140.0, 70.0);
        drop.positions.extend(second.positions);
        drop.pathloss.extend(second.pathloss);
        drop.snr_scale.extend(second.snr_scale);
        let h = los_channel(&g, &drop).h;
        let (a, b) = (column(&h, 0), column(&h, 1));
        let cos2 = inner(a, b).norm_sqr() / (norm_sqr(a) * norm_sqr(b));
        assert_relative_eq!(cos2, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn los_column_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ArrayGeometry::new(64, 1.28, 0.01).unwrap();
        let drop = sample_drop(&mut rng, 8, &reference_region(), 0.01).unwrap();
        let real = los_channel(&g, &drop);
        for u in 0..8 {
            assert_relative_eq!(
                norm_sqr(column(&real.h, u)),
                64.0 * drop.pathloss[u],
                max_relative = 1e-12
            );
            let mag = drop.pathloss[u].sqrt();
            assert!(column(&real.h, u)
                .iter()
                .all(|z| (z.norm() - mag).abs() < 1e-12 * mag));
        }
        let d_avg = average_distance(50.0, 150.0).unwrap();
        let hn = real.normalized_to(free_space_pathloss(d_avg, 0.01).unwrap());
        for u in 0..8 {
            assert_relative_eq!(
                hn[(0, u)].norm_sqr(),
                drop.snr_scale[u],
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn rayleigh_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let real = rayleigh_channel(&mut rng, 1000, 1000).unwrap();
        let n = 1_000_000.0;
        let mean: Complex64 = real.h.iter().sum::<Complex64>() / n;
        assert!(mean.re.abs() < 0.005 && mean.im.abs() < 0.005);
        let var = real.h.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.01);

        let mut acc = 0.0;
        for _ in 0..20_000 {
            let h = rayleigh_channel(&mut rng, 16, 1).unwrap().h;
            acc += norm_sqr(column(&h, 0));
        }
        assert!((acc / 20_000.0 / 16.0 - 1.0).abs() < 0.01);
        assert!(rayleigh_channel(&mut rng, 0, 1).is_err());
    }
}
