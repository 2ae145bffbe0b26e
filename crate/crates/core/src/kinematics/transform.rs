use crate::Real;
use nalgebra::{Matrix3, Matrix4, Vector3};
use std::ops::Mul;

/// Proper rigid motion: `x -> rotation * x + translation` (mm).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> RigidTransform<T> {
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<T>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    pub fn from_rotation(r: Matrix3<T>) -> Self {
        Self::new(r, Vector3::zeros())
    }

    pub fn rot_x(angle: T) -> Self {
        Self::from_rotation(rot_x(angle))
    }

    pub fn rot_y(angle: T) -> Self {
        Self::from_rotation(rot_y(angle))
    }

    pub fn rot_z(angle: T) -> Self {
        Self::from_rotation(rot_z(angle))
    }

    pub fn trans_x(v: T) -> Self {
        Self::from_translation(Vector3::new(v, T::zero(), T::zero()))
    }

    pub fn trans_y(v: T) -> Self {
        Self::from_translation(Vector3::new(T::zero(), v, T::zero()))
    }

    pub fn trans_z(v: T) -> Self {
        Self::from_translation(Vector3::new(T::zero(), T::zero(), v))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    /// Third rotation column: the tool axis when this is a base-to-tool transform.
    pub fn z_axis(&self) -> Vector3<T> {
        self.rotation.column(2).into_owned()
    }

    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `max |RᵀR − I|` over all entries.
    pub fn orthonormality_error(&self) -> T {
        orthonormality_error(&self.rotation)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }
}

impl<T: Real> Mul for RigidTransform<T> {
    type Output = RigidTransform<T>;

    fn mul(self, rhs: Self) -> Self {
        RigidTransform::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}

impl<T: Real> Mul<&RigidTransform<T>> for &RigidTransform<T> {
    type Output = RigidTransform<T>;

    fn mul(self, rhs: &RigidTransform<T>) -> RigidTransform<T> {
        *self * *rhs
    }
}

pub fn rot_x<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    Matrix3::new(l, o, o, o, c, -s, o, s, c)
}

pub fn rot_y<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    Matrix3::new(c, o, s, o, l, o, -s, o, c)
}

pub fn rot_z<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    Matrix3::new(c, -s, o, s, c, o, o, o, l)
}

/// Rotation by `angle` about the unit axis `k` (Rodrigues).
pub fn rot_axis<T: Real>(k: &Vector3<T>, angle: T) -> Matrix3<T> {
    let (s, c) = angle.sin_cos();
    let kx = k.cross_matrix();
    Matrix3::identity() * c + kx * s + (k * k.transpose()) * (T::one() - c)
}

pub fn orthonormality_error<T: Real>(r: &Matrix3<T>) -> T {
    (r.transpose() * r - Matrix3::identity()).amax()
}
