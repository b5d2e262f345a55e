//! Contact splats: each 3D contact force becomes an isotropic Gaussian kernel
//! in a camera-aligned RGB image.
//!
//! Red encodes the saturated force magnitude, green/blue the projected force
//! direction, and the kernel radius grows with magnitude. Overlapping kernels
//! are blended by a depth-weighted normalized average (a soft z-buffer), so a
//! pixel's color is always a convex combination of contributing contact colors.

// Negated comparisons here are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::RgbImage;

pub type Vec3 = [f64; 3];

#[derive(Debug, Error, PartialEq)]
pub enum SplatError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid splat config: {0}")]
    InvalidConfig(String),
    #[error("contact {index} has non-finite components")]
    NonFiniteContact { index: usize },
    #[error("depth {depth} is below the near plane {x_min}")]
    BehindNearPlane { depth: f64, x_min: f64 },
    #[error("invalid json: {0}")]
    Json(String),
}

/// Pinhole camera. Camera-frame X is depth along the forward axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    /// World-frame position (m).
    pub c: Vec3,
    /// World-to-camera rotation, row-major.
    pub rotation_cw: [f64; 9],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Near-plane depth (m).
    pub x_min: f64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), SplatError> {
        let bad = |m: &str| Err(SplatError::InvalidCamera(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(self.x_min > 0.0) {
            return bad("x_min must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be at least 1x1");
        }
        let all_finite = self
            .c
            .iter()
            .chain(self.rotation_cw.iter())
            .all(|v| v.is_finite())
            && [self.cx, self.cy].iter().all(|v| v.is_finite());
        if !all_finite {
            return bad("non-finite parameter");
        }
        let r = &self.rotation_cw;
        for i in 0..3 {
            for j in 0..3 {
                // (R^T R)_ij = sum_k R_ki R_kj
                let dot: f64 = (0..3).map(|k| r[k * 3 + i] * r[k * 3 + j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-9 {
                    return bad("rotation_cw is not orthonormal");
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SplatError> {
        let cam: CameraModel =
            serde_json::from_str(text).map_err(|e| SplatError::Json(e.to_string()))?;
        cam.validate()?;
        Ok(cam)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    /// Contact point, world frame (m).
    pub p: Vec3,
    /// Contact force, world frame (N).
    pub f: Vec3,
}

impl ContactRecord {
    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.f.iter()).all(|v| v.is_finite())
    }

    pub fn magnitude(&self) -> f64 {
        norm3(self.f)
    }
}

/// Parses a scene file: a JSON array of `{p:[x,y,z], f:[x,y,z]}`.
pub fn load_scene(text: &str) -> Result<Vec<ContactRecord>, SplatError> {
    let contacts: Vec<ContactRecord> =
        serde_json::from_str(text).map_err(|e| SplatError::Json(e.to_string()))?;
    for (index, c) in contacts.iter().enumerate() {
        if !c.is_finite() {
            return Err(SplatError::NonFiniteContact { index });
        }
    }
    Ok(contacts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplatConfig {
    /// Force saturation (N).
    pub m_max: f64,
    /// Radius shaping exponent.
    pub gamma: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Depth weight scale (m).
    pub tau_depth: f64,
    /// `(a, b)` in `s = a + b * |f|`, the length of the direction probe.
    pub force_display_scale: (f64, f64),
    pub kernel_window_mult: f64,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            m_max: 20.0,
            gamma: 2.0,
            r_min: 2.0,
            r_max: 10.0,
            tau_depth: 1.0,
            force_display_scale: (0.05, 0.01),
            kernel_window_mult: 3.0,
        }
    }
}

impl SplatConfig {
    pub fn validate(&self) -> Result<(), SplatError> {
        let bad = |m: &str| Err(SplatError::InvalidConfig(m.to_string()));
        if !(self.m_max > 0.0) {
            return bad("m_max must be positive");
        }
        if !(self.gamma >= 1.0) {
            return bad("gamma must be >= 1");
        }
        if !(self.r_min > 0.0 && self.r_min <= self.r_max && self.r_max.is_finite()) {
            return bad("need 0 < r_min <= r_max");
        }
        if !(self.tau_depth > 0.0) {
            return bad("tau_depth must be positive");
        }
        if !(self.kernel_window_mult > 0.0 && self.kernel_window_mult.is_finite()) {
            return bad("kernel_window_mult must be positive");
        }
        let (a, b) = self.force_display_scale;
        if !(a.is_finite() && b.is_finite()) {
            return bad("force_display_scale must be finite");
        }
        Ok(())
    }

    fn probe_scale(&self, magnitude: f64) -> f64 {
        let (a, b) = self.force_display_scale;
        a + b * magnitude
    }
}

/// Final image; channels in `[0, 1]`, row-major with top-left origin.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl SplatImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    /// `(u, v)` = (column, row).
    pub fn get(&self, u: usize, v: usize) -> [f64; 3] {
        self.pixels[v * self.width + u]
    }

    /// Quantizes with `round(255 * I)`.
    pub fn to_rgb8(&self) -> RgbImage {
        let mut data = Vec::with_capacity(self.pixels.len() * 3);
        for px in &self.pixels {
            for ch in px {
                data.push((255.0 * ch.clamp(0.0, 1.0)).round() as u8);
            }
        }
        RgbImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

pub(crate) fn norm3(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `R_cw (p - c)`.
pub fn world_to_camera(p: Vec3, cam: &CameraModel) -> Vec3 {
    let d = [p[0] - cam.c[0], p[1] - cam.c[1], p[2] - cam.c[2]];
    let r = &cam.rotation_cw;
    [
        r[0] * d[0] + r[1] * d[1] + r[2] * d[2],
        r[3] * d[0] + r[4] * d[1] + r[5] * d[2],
        r[6] * d[0] + r[7] * d[1] + r[8] * d[2],
    ]
}

/// Pinhole projection with the minus-sign convention
/// `u = cx - fx Y/X`, `v = cy - fy Z/X`.
pub fn project(x_cam: Vec3, cam: &CameraModel) -> Result<(f64, f64), SplatError> {
    let [x, y, z] = x_cam;
    if !(x >= cam.x_min) {
        return Err(SplatError::BehindNearPlane {
            depth: x,
            x_min: cam.x_min,
        });
    }
    Ok((cam.cx - cam.fx * (y / x), cam.cy - cam.fy * (z / x)))
}

/// Round half away from zero to the nearest pixel center.
pub fn pixel_center(u: f64, v: f64) -> (i64, i64) {
    (u.round() as i64, v.round() as i64)
}

/// Per-contact color and placement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodedContact {
    pub rgb: [f64; 3],
    pub center: (i64, i64),
    /// Camera-frame depth X.
    pub depth: f64,
}

/// `(x + 1) / 2`, the `[-1, 1] -> [0, 1]` channel map.
fn unit_to_channel(x: f64) -> f64 {
    (x + 1.0) / 2.0
}

pub fn encode_color(
    contact: &ContactRecord,
    cam: &CameraModel,
    cfg: &SplatConfig,
) -> Result<EncodedContact, SplatError> {
    let x_cam = world_to_camera(contact.p, cam);
    let (u, v) = project(x_cam, cam)?;
    let m = contact.magnitude();
    let red = m.min(cfg.m_max) / cfg.m_max;

    let s = cfg.probe_scale(m);
    let tip = [
        contact.p[0] + s * contact.f[0],
        contact.p[1] + s * contact.f[1],
        contact.p[2] + s * contact.f[2],
    ];
    // A probe behind the near plane or a zero pixel displacement both encode
    // "no direction" as the image of the zero vector.
    let (green, blue) = match project(world_to_camera(tip, cam), cam) {
        Ok((u_end, v_end)) => {
            let du = u_end - u;
            let dv = v_end - v;
            let len = (du * du + dv * dv).sqrt();
            if len > 0.0 && len.is_finite() {
                (unit_to_channel(du / len), unit_to_channel(dv / len))
            } else {
                (0.5, 0.5)
            }
        }
        Err(_) => (0.5, 0.5),
    };

    Ok(EncodedContact {
        rgb: [red, green, blue],
        center: pixel_center(u, v),
        depth: x_cam[0],
    })
}

/// Kernel radius in pixels: `r_min + (r_max - r_min) * (min(m, m_max)/m_max)^gamma`.
pub fn splat_radius(m: f64, cfg: &SplatConfig) -> f64 {
    let t = (m.min(cfg.m_max) / cfg.m_max).powf(cfg.gamma);
    cfg.r_min + (cfg.r_max - cfg.r_min) * t
}

/// Window half-width in pixels, `ceil(kernel_window_mult * r)`.
pub fn kernel_window(r: f64, cfg: &SplatConfig) -> i64 {
    (cfg.kernel_window_mult * r).ceil() as i64
}

struct Kernel {
    rgb: [f64; 3],
    center: (i64, i64),
    depth_weight: f64,
    inv_two_sigma_sq: f64,
    window: i64,
}

impl Kernel {
    /// Calls `visit(pixel_index, weight)` for every in-bounds sample in a fixed order.
    fn for_each_sample(&self, width: usize, height: usize, mut visit: impl FnMut(usize, f64)) {
        let (cu, cv) = self.center;
        for dv in -self.window..=self.window {
            let row = cv + dv;
            if row < 0 || row >= height as i64 {
                continue;
            }
            for du in -self.window..=self.window {
                let col = cu + du;
                if col < 0 || col >= width as i64 {
                    continue;
                }
                let d2 = (du * du + dv * dv) as f64;
                let w = self.depth_weight * (-d2 * self.inv_two_sigma_sq).exp();
                visit(row as usize * width + col as usize, w);
            }
        }
    }
}

fn build_kernels(
    contacts: &[ContactRecord],
    cam: &CameraModel,
    cfg: &SplatConfig,
) -> Result<Vec<Kernel>, SplatError> {
    cam.validate()?;
    cfg.validate()?;
    let mut kernels = Vec::with_capacity(contacts.len());
    for (index, contact) in contacts.iter().enumerate() {
        if !contact.is_finite() {
            return Err(SplatError::NonFiniteContact { index });
        }
        let m = contact.magnitude();
        if m == 0.0 {
            continue;
        }
        let enc = match encode_color(contact, cam, cfg) {
            Ok(e) => e,
            Err(SplatError::BehindNearPlane { .. }) => continue,
            Err(e) => return Err(e),
        };
        let r = splat_radius(m, cfg);
        let sigma = r / 3.0;
        kernels.push(Kernel {
            rgb: enc.rgb,
            center: enc.center,
            depth_weight: (-enc.depth / cfg.tau_depth).exp(),
            inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma),
            window: kernel_window(r, cfg),
        });
    }
    Ok(kernels)
}

/// Renders the splat image and also returns the accumulated weight map `W`.
pub fn render_splats_with_weights(
    contacts: &[ContactRecord],
    cam: &CameraModel,
    cfg: &SplatConfig,
) -> Result<(SplatImage, Vec<f64>), SplatError> {
    let kernels = build_kernels(contacts, cam, cfg)?;
    let (width, height) = (cam.width, cam.height);

    let mut weight = vec![0.0f64; width * height];
    for k in &kernels {
        k.for_each_sample(width, height, |i, w| weight[i] += w);
    }

    // Second pass accumulates (w_i / W) c_i so that a lone contributor
    // reproduces its color bit-exactly.
    let mut img = SplatImage::zeros(width, height);
    for k in &kernels {
        k.for_each_sample(width, height, |i, w| {
            let total = weight[i];
            if total > 0.0 {
                let share = w / total;
                for (ch, c) in img.pixels[i].iter_mut().zip(k.rgb) {
                    *ch += share * c;
                }
            }
        });
    }
    for px in &mut img.pixels {
        for ch in px.iter_mut() {
            *ch = ch.clamp(0.0, 1.0);
        }
    }
    Ok((img, weight))
}

pub fn render_splats(
    contacts: &[ContactRecord],
    cam: &CameraModel,
    cfg: &SplatConfig,
) -> Result<SplatImage, SplatError> {
    render_splats_with_weights(contacts, cam, cfg).map(|(img, _)| img)
}
