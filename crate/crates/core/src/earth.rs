//! WGS84 ellipsoid constants, normal gravity and curvature radii.

/// WGS84 defining and derived constants used by the mechanization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodeticConstants {
    /// Semi-major axis \[m\].
    pub semi_major_axis: f64,
    /// First eccentricity squared.
    pub ecc_sq: f64,
    /// Normal gravity at the equator \[m/s²\].
    pub gravity_equator: f64,
    /// Somigliana constant k = (b·γ_p)/(a·γ_e) − 1.
    pub somigliana_k: f64,
    /// Linear free-air gradient \[1/s²\].
    pub free_air: f64,
}

const FLATTENING: f64 = 1.0 / 298.257_223_563;

pub const WGS84: GeodeticConstants = GeodeticConstants {
    semi_major_axis: 6_378_137.0,
    ecc_sq: FLATTENING * (2.0 - FLATTENING),
    gravity_equator: 9.780_325_335_9,
    somigliana_k: 0.001_931_852_652_41,
    free_air: 3.086e-6,
};

impl GeodeticConstants {
    /// Somigliana normal gravity with a linear free-air correction, positive down.
    pub fn normal_gravity(&self, lat: f64, alt: f64) -> f64 {
        let s2 = lat.sin().powi(2);
        let surface =
            self.gravity_equator * (1.0 + self.somigliana_k * s2) / (1.0 - self.ecc_sq * s2).sqrt();
        surface - self.free_air * alt
    }

    /// Meridian radius of curvature R_M.
    pub fn meridian_radius(&self, lat: f64) -> f64 {
        let w = 1.0 - self.ecc_sq * lat.sin().powi(2);
        self.semi_major_axis * (1.0 - self.ecc_sq) / (w * w.sqrt())
    }

    /// Prime-vertical radius of curvature R_N.
    pub fn prime_vertical_radius(&self, lat: f64) -> f64 {
        self.semi_major_axis / (1.0 - self.ecc_sq * lat.sin().powi(2)).sqrt()
    }
}

/// Normal gravity magnitude at geodetic latitude `lat` (rad) and height `alt` (m).
pub fn normal_gravity(lat: f64, alt: f64) -> f64 {
    WGS84.normal_gravity(lat, alt)
}
