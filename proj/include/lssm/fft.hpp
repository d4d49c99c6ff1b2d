#pragma once

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "lssm/grid.hpp"

namespace lssm {

/// Cached FFTW plans for one cube size. Plans are created once per n under a
/// lock and executed through the new-array interface, which is safe to call
/// concurrently. Plans use FFTW_ESTIMATE | FFTW_UNALIGNED so plan selection
/// and results are deterministic and independent of buffer addresses.
///
/// Normalization: forward() divides by n^3, so coefficients satisfy
/// u(x) = sum_kappa uhat(kappa) exp(i (2*pi/ell) kappa . x), and backward()
/// is the plain unnormalized synthesis sum.
class Fft {
public:
    static const Fft& plan_for(int n) {
        static std::mutex mutex;
        static std::map<int, std::unique_ptr<Fft>> cache;
        std::lock_guard<std::mutex> lock(mutex);
        auto it = cache.find(n);
        if (it == cache.end()) {
            it = cache.emplace(n, std::unique_ptr<Fft>(new Fft(n))).first;
        }
        return *it->second;
    }

    /// Real field (n^3, row-major x,y,z) -> scaled half-spectrum coefficients.
    void forward(const double* in, std::complex<double>* out) const {
        fftw_execute_dft_r2c(r2c_, const_cast<double*>(in),
                             reinterpret_cast<fftw_complex*>(out));
        const double scale = 1.0 / static_cast<double>(physical_size_);
        for (std::size_t i = 0; i < spectral_size_; ++i) out[i] *= scale;
    }

    /// Coefficients -> real field. The input is copied first because
    /// multi-dimensional c2r transforms destroy their input.
    void backward(const std::complex<double>* in, double* out) const {
        std::vector<std::complex<double>> scratch(in, in + spectral_size_);
        fftw_execute_dft_c2r(c2r_, reinterpret_cast<fftw_complex*>(scratch.data()), out);
    }

    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;

    ~Fft() {
        fftw_destroy_plan(r2c_);
        fftw_destroy_plan(c2r_);
    }

private:
    explicit Fft(int n)
        : physical_size_(static_cast<std::size_t>(n) * n * n),
          spectral_size_(static_cast<std::size_t>(n) * n * (n / 2 + 1)) {
        std::vector<double> real_buf(physical_size_);
        std::vector<std::complex<double>> cplx_buf(spectral_size_);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        r2c_ = fftw_plan_dft_r2c_3d(n, n, n, real_buf.data(),
                                    reinterpret_cast<fftw_complex*>(cplx_buf.data()), flags);
        c2r_ = fftw_plan_dft_c2r_3d(n, n, n,
                                    reinterpret_cast<fftw_complex*>(cplx_buf.data()),
                                    real_buf.data(), flags);
        if (!r2c_ || !c2r_) throw DataError("fftw plan creation failed");
    }

    std::size_t physical_size_;
    std::size_t spectral_size_;
    fftw_plan r2c_;
    fftw_plan c2r_;
};

} // namespace lssm
