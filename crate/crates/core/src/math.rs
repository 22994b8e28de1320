// Float routines that `core` does not provide. `libm` keeps results identical
// with and without `std`.

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[cfg(test)]
#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}
