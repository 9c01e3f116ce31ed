#include "kdiqa/kernels.hpp"

#include <exception>
#include <string>

#include "kdiqa/error.hpp"

namespace kdiqa::kernels {

namespace {

void check_upstream(std::span<const ForwardCache> caches, const Matrix& upstream) {
    if (upstream.rows() != caches.size())
        fail(ErrorKind::shape, "backward_batch: " + std::to_string(upstream.rows()) +
                                   " upstream rows for " + std::to_string(caches.size()) + " caches");
}

// Rethrows the error of the lowest failing index, tagged with that index.
void rethrow_first(const std::vector<std::exception_ptr>& errors, const char* who) {
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const Error& e) {
            fail(e.kind(), std::string(who) + ": element " + std::to_string(i) + ": " + e.what());
        }
    }
}

}  // namespace

namespace serial {

std::vector<Embedding> encode_batch(const EncoderParams& params, std::span<const Vec> xs,
                                    std::vector<ForwardCache>* caches) {
    std::vector<Embedding> out(xs.size());
    if (caches) caches->assign(xs.size(), ForwardCache{});
    ForwardCache scratch;
    for (std::size_t i = 0; i < xs.size(); ++i)
        out[i] = forward(params, xs[i], caches ? (*caches)[i] : scratch);
    return out;
}

std::vector<double> score_batch(std::span<const Embedding> imgs, const PromptBank& bank) {
    return kdiqa::score_batch(imgs, bank);
}

GradBundle backward_batch(const EncoderParams& params, std::span<const ForwardCache> caches,
                          const Matrix& upstream) {
    check_upstream(caches, upstream);
    GradBundle total = GradBundle::zeros_like(params);
    for (std::size_t i = 0; i < caches.size(); ++i)
        total.add(backward(params, caches[i], upstream.row(i)));
    return total;
}

}  // namespace serial

namespace omp {

std::vector<Embedding> encode_batch(const EncoderParams& params, std::span<const Vec> xs,
                                    std::vector<ForwardCache>* caches) {
    const auto n = static_cast<long>(xs.size());
    std::vector<Embedding> out(xs.size());
    std::vector<ForwardCache> local(caches ? 0 : xs.size());
    std::vector<ForwardCache>& dst = caches ? *caches : local;
    dst.assign(xs.size(), ForwardCache{});
    std::vector<std::exception_ptr> errors(xs.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        try {
            out[i] = forward(params, xs[i], dst[i]);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    rethrow_first(errors, "encode_batch");
    return out;
}

std::vector<double> score_batch(std::span<const Embedding> imgs, const PromptBank& bank) {
    if (imgs.empty()) fail(ErrorKind::shape, "score_batch: empty batch");
    const auto n = static_cast<long>(imgs.size());
    std::vector<double> out(imgs.size());
    std::vector<std::exception_ptr> errors(imgs.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        try {
            out[i] = score(imgs[i].view(), bank);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    rethrow_first(errors, "score_batch");
    return out;
}

GradBundle backward_batch(const EncoderParams& params, std::span<const ForwardCache> caches,
                          const Matrix& upstream) {
    check_upstream(caches, upstream);
    const auto n = static_cast<long>(caches.size());
    std::vector<GradBundle> parts(caches.size());
    std::vector<std::exception_ptr> errors(caches.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        try {
            parts[i] = backward(params, caches[i], upstream.row(i));
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    rethrow_first(errors, "backward_batch");
    GradBundle total = GradBundle::zeros_like(params);
    for (const auto& g : parts) total.add(g);
    return total;
}

}  // namespace omp

}  // namespace kdiqa::kernels
