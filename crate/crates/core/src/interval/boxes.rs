use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Interval;
use crate::error::{Error, Result};

/// An interval vector; its width is the largest component width.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct IntervalBox {
    dims: Vec<Interval>,
}

impl IntervalBox {
    pub fn new(dims: Vec<Interval>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::EmptyList);
        }
        Ok(Self { dims })
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let dims = bounds
            .iter()
            .map(|&(lo, hi)| Interval::try_new(lo, hi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims)
    }

    pub fn point(x: &[f64]) -> Result<Self> {
        Self::new(x.iter().map(|&v| Interval::try_new(v, v)).collect::<Result<_>>()?)
    }

    /// Callers guarantee a non-empty vector.
    pub(crate) fn from_vec(dims: Vec<Interval>) -> Self {
        debug_assert!(!dims.is_empty());
        Self { dims }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[Interval] {
        &self.dims
    }

    pub fn into_dims(self) -> Vec<Interval> {
        self.dims
    }

    pub fn width(&self) -> f64 {
        self.dims.iter().map(Interval::width).fold(0.0, f64::max)
    }

    /// Index of the widest component, ties resolved to the lowest index.
    pub fn widest_dim(&self) -> usize {
        let mut best = 0;
        for (i, d) in self.dims.iter().enumerate() {
            if d.width() > self.dims[best].width() {
                best = i;
            }
        }
        best
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::mid).collect()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::hi).collect()
    }

    /// Splits the widest component at its midpoint.
    pub fn bisect(&self) -> Result<(IntervalBox, IntervalBox)> {
        if self.width() <= 0.0 {
            return Err(Error::DegenerateBox);
        }
        let k = self.widest_dim();
        let d = self.dims[k];
        let m = d.mid();
        let mut left = self.dims.clone();
        let mut right = self.dims.clone();
        left[k] = Interval::raw(d.lo(), m);
        right[k] = Interval::raw(m, d.hi());
        Ok((Self::from_vec(left), Self::from_vec(right)))
    }

    pub fn is_subset_of(&self, other: &IntervalBox) -> Result<bool> {
        self.check_dim(other.dim())?;
        Ok(self.dims.iter().zip(&other.dims).all(|(a, b)| a.is_subset_of(b)))
    }

    pub fn contains_point(&self, x: &[f64]) -> Result<bool> {
        self.check_dim(x.len())?;
        Ok(self.dims.iter().zip(x).all(|(d, &v)| d.contains(v)))
    }

    pub fn hull(&self, other: &IntervalBox) -> Result<IntervalBox> {
        self.check_dim(other.dim())?;
        Ok(Self::from_vec(
            self.dims.iter().zip(&other.dims).map(|(a, b)| a.hull(b)).collect(),
        ))
    }

    /// Componentwise min/max over a list of boxes.
    pub fn hull_of_boxes<'a, I>(boxes: I) -> Result<IntervalBox>
    where
        I: IntoIterator<Item = &'a IntervalBox>,
    {
        let mut it = boxes.into_iter();
        let mut acc = it.next().ok_or(Error::EmptyList)?.clone();
        for b in it {
            acc = acc.hull(b)?;
        }
        Ok(acc)
    }

    /// Componentwise min/max over a list of points.
    pub fn hull_of_points<P: AsRef<[f64]>>(points: &[P]) -> Result<IntervalBox> {
        let first = points.first().ok_or(Error::EmptyList)?.as_ref();
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        for p in &points[1..] {
            let p = p.as_ref();
            if p.len() != lo.len() {
                return Err(Error::dims(lo.len(), p.len()));
            }
            for (i, &v) in p.iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        let bounds: Vec<(f64, f64)> = lo.into_iter().zip(hi).collect();
        Self::from_bounds(&bounds)
    }

    pub fn intersect(&self, other: &IntervalBox) -> Result<Option<IntervalBox>> {
        self.check_dim(other.dim())?;
        let dims: Option<Vec<Interval>> =
            self.dims.iter().zip(&other.dims).map(|(a, b)| a.intersect(b)).collect();
        Ok(dims.map(Self::from_vec))
    }

    /// Cartesian product `self x other`.
    pub fn product(&self, other: &IntervalBox) -> IntervalBox {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self::from_vec(dims)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() == n {
            Ok(())
        } else {
            Err(Error::dims(self.dim(), n))
        }
    }
}

impl std::ops::Index<usize> for IntervalBox {
    type Output = Interval;
    fn index(&self, i: usize) -> &Interval {
        &self.dims[i]
    }
}

impl TryFrom<Vec<Interval>> for IntervalBox {
    type Error = Error;
    fn try_from(v: Vec<Interval>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<IntervalBox> for Vec<Interval> {
    fn from(b: IntervalBox) -> Self {
        b.dims
    }
}

impl fmt::Debug for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.dims).finish()
    }
}

impl fmt::Display for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                write!(f, " x ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Parses `"lo,hi;lo,hi;..."`.
impl FromStr for IntervalBox {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut bounds = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let mut it = part.split(',').map(str::trim);
            let parse = |t: Option<&str>| -> Result<f64> {
                t.ok_or_else(|| Error::Parse(format!("expected `lo,hi` in `{part}`")))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("`{part}`: {e}")))
            };
            let lo = parse(it.next())?;
            let hi = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Parse(format!("expected `lo,hi` in `{part}`")));
            }
            bounds.push((lo, hi));
        }
        Self::from_bounds(&bounds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(b: &[(f64, f64)]) -> IntervalBox {
        IntervalBox::from_bounds(b).unwrap()
    }

    #[test]
    fn width_examples() {
        assert_eq!(bx(&[(0., 1.), (0., 0.5)]).width(), 1.0);
        assert_eq!(bx(&[(2., 2.)]).width(), 0.0);
        assert_eq!(bx(&[(-1., 3.), (0., 1.)]).width(), 4.0);
    }

    #[test]
    fn bisect_examples() {
        let (a, b) = bx(&[(0., 2.), (0., 1.)]).bisect().unwrap();
        assert_eq!(a, bx(&[(0., 1.), (0., 1.)]));
        assert_eq!(b, bx(&[(1., 2.), (0., 1.)]));
        let (a, b) = bx(&[(0., 1.), (0., 1.)]).bisect().unwrap();
        assert_eq!(a, bx(&[(0., 0.5), (0., 1.)]));
        assert_eq!(b, bx(&[(0.5, 1.), (0., 1.)]));
        assert_eq!(bx(&[(3., 3.)]).bisect(), Err(Error::DegenerateBox));
    }

    #[test]
    fn subset_examples() {
        assert!(bx(&[(0., 1.)]).is_subset_of(&bx(&[(0., 1.)])).unwrap());
        assert!(bx(&[(0., 1.), (0., 1.)]).is_subset_of(&bx(&[(0., 2.), (-1., 1.)])).unwrap());
        assert!(matches!(
            bx(&[(0., 1.)]).is_subset_of(&bx(&[(0., 1.), (0., 1.)])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hull_examples() {
        let pts = [vec![0., 0.], vec![1., 2.], vec![-1., 1.]];
        assert_eq!(IntervalBox::hull_of_points(&pts).unwrap(), bx(&[(-1., 1.), (0., 2.)]));
        assert_eq!(IntervalBox::hull_of_points(&[[3., 4.]]).unwrap(), bx(&[(3., 3.), (4., 4.)]));
        let boxes = [bx(&[(0., 1.)]), bx(&[(2., 3.)])];
        assert_eq!(IntervalBox::hull_of_boxes(&boxes).unwrap(), bx(&[(0., 3.)]));
        let none: [Vec<f64>; 0] = [];
        assert_eq!(IntervalBox::hull_of_points(&none), Err(Error::EmptyList));
        assert!(matches!(
            IntervalBox::hull_of_points(&[vec![0.], vec![0., 1.]]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(IntervalBox::hull_of_boxes(&[bx(&[(0., 1.)]), bx(&[(0., 1.), (0., 1.)])]).is_err());
    }

    #[test]
    fn parses_flag_syntax() {
        let b: IntervalBox = "1.0472,2.0944; 0,1".parse().unwrap();
        assert_eq!(b, bx(&[(1.0472, 2.0944), (0., 1.)]));
        assert!("1,0".parse::<IntervalBox>().is_err());
        assert!("1".parse::<IntervalBox>().is_err());
        assert!("".parse::<IntervalBox>().is_err());
    }

    fn arb_box() -> impl Strategy<Value = IntervalBox> {
        prop::collection::vec((-100.0f64..100.0, 1e-6f64..50.0), 1..6).prop_map(|v| {
            IntervalBox::from_bounds(&v.iter().map(|&(lo, w)| (lo, lo + w)).collect::<Vec<_>>())
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn bisection_partitions_the_box(b in arb_box()) {
            let (l, r) = b.bisect().unwrap();
            prop_assert_eq!(l.hull(&r).unwrap(), b.clone());
            prop_assert!(l.width() <= b.width() && r.width() <= b.width());
            let k = b.widest_dim();
            let half = b[k].width() / 2.0;
            prop_assert!((l[k].width() - half).abs() <= 1e-12 * b[k].width().max(1.0));
            prop_assert!((r[k].width() - half).abs() <= 1e-12 * b[k].width().max(1.0));
            prop_assert_eq!(l[k].hi(), r[k].lo());
        }
    }
}
