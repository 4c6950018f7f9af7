#include "biomoe/train.hpp"

#include "biomoe/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

namespace biomoe {

namespace {

double ratio(double num, double den)
{
    return den == 0.0 ? 0.0 : num / den;
}

void check_step(double t, const ScheduleConfig& cfg)
{
    if (!(t >= 0.0 && t <= static_cast<double>(cfg.total_steps)))
        throw UsageError("step " + std::to_string(t) + " outside [0, " + std::to_string(cfg.total_steps) + "]");
}

double lerp_schedule(double t, const ScheduleConfig& cfg, double start, double end)
{
    cfg.validate();
    check_step(t, cfg);
    return start + t / static_cast<double>(cfg.total_steps) * (end - start);
}

}  // namespace

std::string_view to_string(LossVariant v) noexcept
{
    return v == LossVariant::as_written ? "AS_WRITTEN" : "UNCERTAINTY";
}

LossVariant parse_loss_variant(std::string_view name)
{
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    if (upper == "AS_WRITTEN")
        return LossVariant::as_written;
    if (upper == "UNCERTAINTY")
        return LossVariant::uncertainty;
    throw UsageError("unknown loss variant '" + std::string(name) + "' (expected AS_WRITTEN or UNCERTAINTY)");
}

LossResult multitask_loss(std::span<const double> losses, std::span<const double> weights, LossVariant variant)
{
    if (losses.size() != weights.size())
        throw ShapeError(std::to_string(losses.size()) + " task losses but " + std::to_string(weights.size()) +
                         " weights");
    if (losses.empty())
        throw UsageError("multitask loss needs at least one task");
    const double sign = variant == LossVariant::as_written ? 1.0 : -1.0;
    LossResult r;
    r.grad.resize(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        if (!std::isfinite(losses[i]) || !std::isfinite(weights[i]))
            throw ProcessingError("task " + std::to_string(i) + " has a non-finite loss or weight");
        const double scaled = std::exp(sign * weights[i]) * losses[i];
        r.value += scaled + weights[i];
        r.grad[i] = sign * scaled + 1.0;
    }
    return r;
}

ScheduleConfig ScheduleConfig::for_steps(std::size_t total_steps)
{
    ScheduleConfig c;
    c.total_steps = total_steps;
    c.warmup = static_cast<std::size_t>(std::llround(0.05 * static_cast<double>(total_steps)));
    c.cooldown = static_cast<std::size_t>(std::llround(0.10 * static_cast<double>(total_steps)));
    return c;
}

void ScheduleConfig::validate() const
{
    auto rate = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0))
            throw UsageError(std::string(name) + " must lie in [0, 1]");
    };
    if (total_steps == 0)
        throw UsageError("total_steps must be positive");
    rate(p_start, "p_start");
    rate(p_end, "p_end");
    rate(eps_start, "eps_start");
    rate(eps_end, "eps_end");
    if (eps_start >= 1.0 || eps_end >= 1.0)
        throw UsageError("label smoothing must stay below 1");
    if (warmup + cooldown > total_steps)
        throw UsageError("warmup + cooldown exceeds total_steps");
    if (!(base_lr > 0.0) || !std::isfinite(base_lr))
        throw UsageError("base_lr must be positive");
    if (!(lr_floor >= 0.0 && lr_floor <= base_lr))
        throw UsageError("lr_floor must lie in [0, base_lr]");
    if (batch_size == 0)
        throw UsageError("batch_size must be positive");
}

double dropout_rate(double t, const ScheduleConfig& cfg)
{
    return lerp_schedule(t, cfg, cfg.p_start, cfg.p_end);
}

double smoothing_eps(double t, const ScheduleConfig& cfg)
{
    return lerp_schedule(t, cfg, cfg.eps_start, cfg.eps_end);
}

double cosine_lr(double t, const ScheduleConfig& cfg)
{
    cfg.validate();
    check_step(t, cfg);
    const double total = static_cast<double>(cfg.total_steps);
    const double warm = static_cast<double>(cfg.warmup);
    const double cool_start = total - static_cast<double>(cfg.cooldown);
    const double span = cool_start - warm;

    if (t < warm)
        return cfg.base_lr * t / warm;
    if (t <= cool_start && span > 0.0) {
        const double phase = (t - warm) / span;
        return cfg.lr_floor + (cfg.base_lr - cfg.lr_floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
    }
    // without a cosine span the cooldown starts straight from the peak
    const double from = span > 0.0 ? cfg.lr_floor : cfg.base_lr;
    if (cfg.cooldown == 0)
        return from;
    return from * (total - t) / static_cast<double>(cfg.cooldown);
}

double smoothed_cross_entropy(std::span<const double> probs, std::size_t true_class, double eps)
{
    const std::size_t n = probs.size();
    if (n < 2)
        throw UsageError("need at least two class probabilities");
    if (true_class >= n)
        throw UsageError("true class " + std::to_string(true_class) + " out of range for " + std::to_string(n) +
                         " classes");
    if (!(eps >= 0.0 && eps < 1.0))
        throw UsageError("label smoothing eps must lie in [0, 1)");
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0)
            throw ProcessingError("probabilities must be finite and nonnegative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw ProcessingError("probabilities sum to " + std::to_string(sum) + ", not 1");

    double loss = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        const double target = (c == true_class ? 1.0 - eps : 0.0) + eps / static_cast<double>(n);
        if (target > 0.0)
            loss -= target * std::log(std::max(probs[c], 1e-12));
    }
    return loss;
}

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes) : n_(n_classes), counts_(n_classes * n_classes, 0)
{
    if (n_classes < 2)
        throw UsageError("a confusion matrix needs at least two classes");
}

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes, std::vector<std::uint64_t> counts)
    : ConfusionMatrix(n_classes)
{
    if (counts.size() != n_classes * n_classes)
        throw ShapeError("confusion matrix needs " + std::to_string(n_classes * n_classes) + " counts, got " +
                         std::to_string(counts.size()));
    counts_ = std::move(counts);
}

void ConfusionMatrix::add(std::size_t true_class, std::size_t predicted, std::uint64_t count)
{
    if (true_class >= n_ || predicted >= n_)
        throw UsageError("class index out of range");
    counts_[true_class * n_ + predicted] += count;
}

std::uint64_t ConfusionMatrix::at(std::size_t true_class, std::size_t predicted) const
{
    if (true_class >= n_ || predicted >= n_)
        throw UsageError("class index out of range");
    return counts_[true_class * n_ + predicted];
}

std::uint64_t ConfusionMatrix::total() const noexcept
{
    std::uint64_t t = 0;
    for (auto c : counts_)
        t += c;
    return t;
}

MacroMetrics macro_metrics(const ConfusionMatrix& cm)
{
    if (cm.total() == 0)
        throw ProcessingError("confusion matrix is empty");
    const std::size_t n = cm.classes();
    MacroMetrics m;
    for (std::size_t k = 0; k < n; ++k) {
        double row = 0.0, col = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row += static_cast<double>(cm.at(k, j));
            col += static_cast<double>(cm.at(j, k));
        }
        const double tp = static_cast<double>(cm.at(k, k));
        const double recall = ratio(tp, row), precision = ratio(tp, col);
        const double f1 = ratio(2.0 * precision * recall, precision + recall);
        m.recall_per_class.push_back(recall);
        m.precision_per_class.push_back(precision);
        m.f1_per_class.push_back(f1);
        m.accuracy += recall;
        m.precision += precision;
        m.f1 += f1;
    }
    m.accuracy /= static_cast<double>(n);
    m.precision /= static_cast<double>(n);
    m.f1 /= static_cast<double>(n);
    return m;
}

}  // namespace biomoe
