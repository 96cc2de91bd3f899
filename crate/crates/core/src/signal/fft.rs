use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn norm(self) -> f64 {
        libm::hypot(self.re, self.im)
    }
}

/// Iterative radix-2 decimation-in-time FFT. `buf.len()` must be a power of two.
pub fn fft_in_place(buf: &mut [Complex]) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "fft size {n} is not a power of two");
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let twiddles: Vec<Complex> = (0..n / 2)
        .map(|k| {
            let a = -core::f64::consts::TAU * k as f64 / n as f64;
            Complex { re: libm::cos(a), im: libm::sin(a) }
        })
        .collect();
    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let step = n / size;
        for start in (0..n).step_by(size) {
            for k in 0..half {
                let w = twiddles[k * step];
                let b = buf[start + k + half];
                let t = Complex { re: w.re * b.re - w.im * b.im, im: w.re * b.im + w.im * b.re };
                let a = buf[start + k];
                buf[start + k] = Complex { re: a.re + t.re, im: a.im + t.im };
                buf[start + k + half] = Complex { re: a.re - t.re, im: a.im - t.im };
            }
        }
        size *= 2;
    }
}
