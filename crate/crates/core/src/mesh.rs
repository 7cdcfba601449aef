//! P1 triangle meshes of rectangles and nodal fields on them.

use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("invalid mesh dimensions: {0}")]
    InvalidDimensions(String),
    #[error("triangle {index} has nonpositive signed area {area}")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("triangle {index} references vertex {vertex} of {count}")]
    BadIndex { index: usize, vertex: usize, count: usize },
    #[error("field has {got} values, mesh has {expected} vertices")]
    LengthMismatch { got: usize, expected: usize },
    #[error("field lives on a different mesh")]
    MeshMismatch,
    #[error("field is nonzero ({value}) at boundary vertex {vertex}")]
    BoundaryViolation { vertex: usize, value: f64 },
}

/// A conforming triangulation with precomputed P1 gradient maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    areas: Vec<f64>,
    // Row d, column k: d/dx_d of the hat function of local vertex k.
    gradients: Vec<[[f64; 3]; 2]>,
    centroids: Vec<[f64; 2]>,
    interior: Vec<usize>,
}

impl Mesh {
    /// Builds a mesh from raw data; triangles must be counter-clockwise.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, boundary: Vec<bool>) -> Result<Self, MeshError> {
        if boundary.len() != vertices.len() {
            return Err(MeshError::LengthMismatch {
                got: boundary.len(),
                expected: vertices.len(),
            });
        }
        let mut areas = Vec::with_capacity(triangles.len());
        let mut gradients = Vec::with_capacity(triangles.len());
        let mut centroids = Vec::with_capacity(triangles.len());
        for (index, tri) in triangles.iter().enumerate() {
            if let Some(&vertex) = tri.iter().find(|&&v| v >= vertices.len()) {
                return Err(MeshError::BadIndex {
                    index,
                    vertex,
                    count: vertices.len(),
                });
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            let area = 0.5 * det;
            if !(area > 0.0) {
                return Err(MeshError::DegenerateTriangle { index, area });
            }
            // grad lambda_k = rot90(opposite edge) / (2 area).
            let g = [
                [(b[1] - c[1]) / det, (c[1] - a[1]) / det, (a[1] - b[1]) / det],
                [(c[0] - b[0]) / det, (a[0] - c[0]) / det, (b[0] - a[0]) / det],
            ];
            areas.push(area);
            gradients.push(g);
            centroids.push([(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]);
        }
        let interior = (0..vertices.len()).filter(|&v| !boundary[v]).collect();
        Ok(Self {
            vertices,
            triangles,
            boundary,
            areas,
            gradients,
            centroids,
            interior,
        })
    }

    /// Structured mesh of `[0, width] x [0, height]` with `nx x ny` cells, each
    /// split into two triangles along alternating diagonals.
    pub fn rectangle(nx: usize, ny: usize, width: f64, height: f64) -> Result<Self, MeshError> {
        if nx < 2 || ny < 2 {
            return Err(MeshError::InvalidDimensions(format!("nx = {nx}, ny = {ny}; both must be >= 2")));
        }
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(MeshError::InvalidDimensions(format!("width = {width}, height = {height}")));
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut boundary = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([width * i as f64 / nx as f64, height * j as f64 / ny as f64]);
                boundary.push(i == 0 || j == 0 || i == nx || j == ny);
            }
        }
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                if (i + j) % 2 == 0 {
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                } else {
                    triangles.push([v00, v10, v01]);
                    triangles.push([v10, v11, v01]);
                }
            }
        }
        Self::new(vertices, triangles, boundary)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    /// Interior vertex indices in increasing order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn centroids(&self) -> &[[f64; 2]] {
        &self.centroids
    }

    pub fn gradient_operator(&self, t: usize) -> &[[f64; 3]; 2] {
        &self.gradients[t]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Gradient of the P1 interpolant of `values` on triangle `t`.
    pub fn element_gradient(&self, t: usize, values: &[f64]) -> [f64; 2] {
        let g = &self.gradients[t];
        let [a, b, c] = self.triangles[t].map(|v| values[v]);
        [
            g[0][0] * a + g[0][1] * b + g[0][2] * c,
            g[1][0] * a + g[1][1] * b + g[1][2] * c,
        ]
    }

    /// Value of the P1 interpolant at the centroid of triangle `t`.
    pub fn element_mean(&self, t: usize, values: &[f64]) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| values[v]);
        (a + b + c) / 3.0
    }

    /// Writes `v0,v1,v2` rows, one per triangle.
    pub fn write_triangles_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "v0,v1,v2")?;
        for t in &self.triangles {
            writeln!(out, "{},{},{}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Writes `x,y,boundary` rows, one per vertex.
    pub fn write_vertices_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,y,boundary")?;
        for (v, b) in self.vertices.iter().zip(&self.boundary) {
            writeln!(out, "{},{},{}", v[0], v[1], u8::from(*b))?;
        }
        Ok(())
    }
}

/// Nodal values of a P1 field.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
    trace_zero: bool,
}

impl DiscreteField {
    /// Any nodal field (no boundary condition).
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != mesh.vertex_count() {
            return Err(MeshError::LengthMismatch {
                got: values.len(),
                expected: mesh.vertex_count(),
            });
        }
        Ok(Self {
            mesh,
            values,
            trace_zero: false,
        })
    }

    /// A field flagged as vanishing on the boundary; rejects nonzero boundary values.
    pub fn trace_zero(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self, MeshError> {
        let mut f = Self::new(mesh, values)?;
        if let Some(v) = f.mesh.boundary.iter().enumerate().position(|(v, &b)| b && f.values[v] != 0.0) {
            return Err(MeshError::BoundaryViolation {
                vertex: v,
                value: f.values[v],
            });
        }
        f.trace_zero = true;
        Ok(f)
    }

    pub fn zero(mesh: Arc<Mesh>) -> Self {
        let n = mesh.vertex_count();
        Self {
            mesh,
            values: vec![0.0; n],
            trace_zero: true,
        }
    }

    /// Nodal interpolant of `g`.
    pub fn interpolate(mesh: Arc<Mesh>, g: impl Fn([f64; 2]) -> f64) -> Self {
        let values = mesh.vertices.iter().map(|&p| g(p)).collect();
        Self {
            mesh,
            values,
            trace_zero: false,
        }
    }

    /// Nodal interpolant of `g` with boundary values forced to zero.
    pub fn interpolate_trace_zero(mesh: Arc<Mesh>, g: impl Fn([f64; 2]) -> f64) -> Self {
        let values = mesh
            .vertices
            .iter()
            .zip(&mesh.boundary)
            .map(|(&p, &b)| if b { 0.0 } else { g(p) })
            .collect();
        Self {
            mesh,
            values,
            trace_zero: true,
        }
    }

    /// Scatters interior values (in [`Mesh::interior`] order) into a trace-zero field.
    pub fn from_interior(mesh: Arc<Mesh>, interior: &[f64]) -> Result<Self, MeshError> {
        if interior.len() != mesh.interior.len() {
            return Err(MeshError::LengthMismatch {
                got: interior.len(),
                expected: mesh.interior.len(),
            });
        }
        let mut values = vec![0.0; mesh.vertex_count()];
        for (&v, &u) in mesh.interior.iter().zip(interior) {
            values[v] = u;
        }
        Ok(Self {
            mesh,
            values,
            trace_zero: true,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_trace_zero(&self) -> bool {
        self.trace_zero
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.mesh.interior.iter().map(|&v| self.values[v]).collect()
    }

    /// `alpha * self`, keeping the boundary flag.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
            trace_zero: self.trace_zero,
        }
    }

    /// `self + other` on the same mesh.
    pub fn add(&self, other: &Self) -> Result<Self, MeshError> {
        self.same_mesh(other)?;
        Ok(Self {
            mesh: self.mesh.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            trace_zero: self.trace_zero && other.trace_zero,
        })
    }

    /// Errors unless `other` lives on the same mesh.
    pub fn same_mesh(&self, other: &Self) -> Result<(), MeshError> {
        self.on_mesh(&other.mesh)
    }

    pub fn on_mesh(&self, mesh: &Arc<Mesh>) -> Result<(), MeshError> {
        if Arc::ptr_eq(&self.mesh, mesh) || *self.mesh == **mesh {
            Ok(())
        } else {
            Err(MeshError::MeshMismatch)
        }
    }

    /// Centroid values, one per triangle.
    pub fn element_means(&self) -> Vec<f64> {
        (0..self.mesh.triangle_count())
            .map(|t| self.mesh.element_mean(t, &self.values))
            .collect()
    }

    /// `|grad u|` on each triangle.
    pub fn gradient_norms(&self) -> Vec<f64> {
        (0..self.mesh.triangle_count())
            .map(|t| {
                let g = self.mesh.element_gradient(t, &self.values);
                g[0].hypot(g[1])
            })
            .collect()
    }

    /// One-point barycentric quadrature of `g(x, u(x))`.
    pub fn integrate(&self, g: impl Fn([f64; 2], f64) -> f64) -> f64 {
        let m = &self.mesh;
        (0..m.triangle_count())
            .map(|t| m.areas[t] * g(m.centroids[t], m.element_mean(t, &self.values)))
            .sum()
    }

    /// Writes `x,y,u` rows in vertex order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,y,u")?;
        for (p, u) in self.mesh.vertices.iter().zip(&self.values) {
            writeln!(out, "{},{},{}", p[0], p[1], u)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::rectangle(n, n, 1.0, 1.0).unwrap())
    }

    #[test]
    fn rectangle_counts_and_area() {
        let m = unit(2);
        assert_eq!(m.triangle_count(), 8);
        assert_eq!(m.vertex_count(), 9);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
        assert_eq!(m.interior(), &[4]);
        let m = unit(32);
        assert_eq!(m.triangle_count(), 2048);
        let m = Mesh::rectangle(5, 3, 2.5, 0.7).unwrap();
        assert!((m.total_area() - 1.75).abs() < 1e-12 * 1.75);
        assert!(m.areas().iter().all(|&a| a > 0.0));
    }

    #[test]
    fn boundary_flags_are_extreme_coordinates() {
        let m = Mesh::rectangle(4, 3, 2.0, 1.0).unwrap();
        for (v, p) in m.vertices().iter().enumerate() {
            let extreme = p[0] == 0.0 || p[1] == 0.0 || p[0] == 2.0 || p[1] == 1.0;
            assert_eq!(m.is_boundary(v), extreme);
        }
    }

    #[test]
    fn invalid_dimensions() {
        assert!(matches!(Mesh::rectangle(1, 4, 1.0, 1.0), Err(MeshError::InvalidDimensions(_))));
        assert!(matches!(Mesh::rectangle(4, 4, 0.0, 1.0), Err(MeshError::InvalidDimensions(_))));
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let r = Mesh::new(v, vec![[0, 2, 1]], vec![true; 3]);
        assert!(matches!(r, Err(MeshError::DegenerateTriangle { .. })));
    }

    #[test]
    fn affine_gradients_are_exact() {
        let m = unit(6);
        let u = DiscreteField::interpolate(m.clone(), |p| p[0]);
        for t in 0..m.triangle_count() {
            let g = m.element_gradient(t, u.values());
            assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
        }
        assert!(u.gradient_norms().iter().all(|&n| (n - 1.0).abs() < 1e-12));
        let u = DiscreteField::interpolate(m.clone(), |p| 3.0 * p[0] - 2.0 * p[1] + 0.5);
        for t in 0..m.triangle_count() {
            let g = m.element_gradient(t, u.values());
            assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] + 2.0).abs() < 1e-12);
        }
        assert!(DiscreteField::zero(m).gradient_norms().iter().all(|&n| n == 0.0));
    }

    #[test]
    fn gradient_map_matches_plane_fit() {
        // Independent route: solve the 2x2 system for the plane through the three vertices.
        let m = unit(5);
        let u = DiscreteField::interpolate(m.clone(), |p| (7.0 * p[0]).sin() + p[1] * p[1]);
        for (t, tri) in m.triangles().iter().enumerate() {
            let [a, b, c] = tri.map(|v| m.vertices()[v]);
            let [ua, ub, uc] = tri.map(|v| u.values()[v]);
            let (e1, e2) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
            let det = e1[0] * e2[1] - e1[1] * e2[0];
            let (d1, d2) = (ub - ua, uc - ua);
            let gx = (d1 * e2[1] - d2 * e1[1]) / det;
            let gy = (e1[0] * d2 - e2[0] * d1) / det;
            let g = m.element_gradient(t, u.values());
            assert!((g[0] - gx).abs() < 1e-12 && (g[1] - gy).abs() < 1e-12);
        }
    }

    #[test]
    fn integration_examples() {
        let m = unit(16);
        let u = DiscreteField::interpolate(m.clone(), |_| 2.5);
        assert!((u.integrate(|_, _| 1.0) - 1.0).abs() < 1e-12);
        assert!((u.integrate(|_, v| v) - 2.5).abs() < 1e-12);
        // Affine integrands are integrated exactly.
        let u = DiscreteField::interpolate(m.clone(), |p| 2.0 * p[0] + p[1]);
        assert!((u.integrate(|_, v| v) - 1.5).abs() < 1e-12);
        // u^2 with u = x: exact 1/3, one-point rule error O(h^2).
        let u = DiscreteField::interpolate(m, |p| p[0]);
        let err = (u.integrate(|_, v| v * v) - 1.0 / 3.0).abs();
        assert!(err < 1.0 / 256.0, "{err}");
    }

    #[test]
    fn interpolation_error_is_second_order() {
        let exact = |p: [f64; 2]| (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).sin();
        let l2 = |n: usize| {
            let m = unit(n);
            let u = DiscreteField::interpolate(m.clone(), exact);
            // Error at centroids against the exact field, 1-point rule.
            (0..m.triangle_count())
                .map(|t| {
                    let e = m.element_mean(t, u.values()) - exact(m.centroids()[t]);
                    m.areas()[t] * e * e
                })
                .sum::<f64>()
                .sqrt()
        };
        let ratio = l2(16) / l2(32);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn trace_zero_checks() {
        let m = unit(4);
        let mut vals = vec![0.0; m.vertex_count()];
        vals[0] = 1.0;
        assert!(matches!(
            DiscreteField::trace_zero(m.clone(), vals),
            Err(MeshError::BoundaryViolation { vertex: 0, .. })
        ));
        let f = DiscreteField::from_interior(m.clone(), &vec![1.0; m.interior().len()]).unwrap();
        assert!(f.is_trace_zero());
        assert_eq!(f.interior_values(), vec![1.0; 9]);
        let other = Arc::new(Mesh::rectangle(5, 4, 1.0, 1.0).unwrap());
        assert!(matches!(f.same_mesh(&DiscreteField::zero(other)), Err(MeshError::MeshMismatch)));
    }

    #[test]
    fn csv_dumps() {
        let m = unit(2);
        let f = DiscreteField::interpolate(m.clone(), |p| p[0] + p[1]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x,y,u");
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[9], "1,1,2");
        let mut buf = Vec::new();
        m.write_triangles_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 9);
    }
}
