#include "biomoe/signal.hpp"

#include "biomoe/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>

namespace biomoe {

namespace {

std::string trim(std::string_view s)
{
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos)
        return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

using cplx = std::complex<double>;

}  // namespace

std::string_view to_string(Modality m) noexcept
{
    switch (m) {
    case Modality::eda: return "EDA";
    case Modality::bvp: return "BVP";
    case Modality::resp: return "RESP";
    case Modality::spo2: return "SPO2";
    case Modality::other: return "OTHER";
    }
    return "OTHER";
}

Modality parse_modality(std::string_view name)
{
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    for (auto m : {Modality::eda, Modality::bvp, Modality::resp, Modality::spo2, Modality::other})
        if (upper == to_string(m))
            return m;
    throw UsageError("unknown modality '" + std::string(name) + "' (expected EDA, BVP, RESP, SPO2 or OTHER)");
}

void validate(const Signal& s)
{
    if (!(s.sample_rate_hz > 0.0) || !std::isfinite(s.sample_rate_hz))
        throw UsageError("sample rate must be positive");
    if (s.samples.empty())
        throw UsageError("signal has no samples");
    for (std::size_t i = 0; i < s.samples.size(); ++i)
        if (!std::isfinite(s.samples[i]))
            throw UsageError("sample " + std::to_string(i) + " is not finite");
}

Signal load_csv(const std::filesystem::path& path, double sample_rate_hz, Modality modality,
                const CsvOptions& options)
{
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot open signal file " + path.string());

    Signal s{.samples = {}, .sample_rate_hz = sample_rate_hz, .modality = modality};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && options.skip_header)
            continue;
        if (trim(line).empty())
            continue;

        std::size_t start = 0;
        for (std::size_t col = 0; col < options.column; ++col) {
            start = line.find(',', start);
            if (start == std::string::npos)
                throw UsageError(path.string() + ": row " + std::to_string(line_no) + " has no column " +
                                 std::to_string(options.column));
            ++start;
        }
        const std::size_t stop = line.find(',', start);
        const std::string cell = trim(std::string_view(line).substr(start, stop == std::string::npos ? stop : stop - start));

        double value = 0.0;
        const char* first = cell.data();
        const char* last = cell.data() + cell.size();
        if (!cell.empty() && *first == '+')
            ++first;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
            throw UsageError(path.string() + ": cannot parse '" + cell + "' at row " + std::to_string(line_no));
        s.samples.push_back(value);
    }
    if (s.samples.empty())
        throw UsageError(path.string() + ": column " + std::to_string(options.column) + " is empty");
    validate(s);
    return s;
}

FilterSpec default_filter(Modality m)
{
    switch (m) {
    case Modality::eda: return {FilterKind::lowpass, 0.0, 5.0};
    case Modality::bvp: return {FilterKind::bandpass, 0.04, 1.7};
    case Modality::resp: return {FilterKind::bandpass, 0.05, 0.5};
    case Modality::spo2: return {FilterKind::bandpass, 0.04, 1.7};
    case Modality::other: break;
    }
    throw UsageError("modality OTHER has no default filter; supply one explicitly");
}

SosFilter design_butterworth(const FilterSpec& spec, double fs, int order)
{
    if (order < 1 || order % 2 != 0)
        throw UsageError("Butterworth order must be a positive even number");
    const double nyquist = fs / 2.0;
    if (!(spec.hi_hz > 0.0) || spec.hi_hz >= nyquist)
        throw UsageError("filter cutoff " + std::to_string(spec.hi_hz) + " Hz must lie in (0, " +
                         std::to_string(nyquist) + ") Hz");
    if (spec.kind == FilterKind::bandpass && (!(spec.lo_hz > 0.0) || spec.lo_hz >= spec.hi_hz))
        throw UsageError("bandpass needs 0 < lo < hi");

    // analog prototype poles in the left half plane
    std::vector<cplx> proto;
    for (int k = 0; k < order; ++k)
        proto.push_back(std::polar(1.0, std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order)));

    const double fs2 = 2.0 * fs;
    auto warp = [&](double f) { return fs2 * std::tan(std::numbers::pi * f / fs); };

    std::vector<cplx> poles;
    double gain = 1.0;
    std::size_t zeros_at_dc = 0;
    if (spec.kind == FilterKind::lowpass) {
        const double wo = warp(spec.hi_hz);
        for (auto p : proto)
            poles.push_back(p * wo);
        gain = std::pow(wo, order);
    } else {
        const double w1 = warp(spec.lo_hz), w2 = warp(spec.hi_hz);
        const double wo = std::sqrt(w1 * w2), bw = w2 - w1;
        for (auto p : proto) {
            const cplx lp = p * bw / 2.0;
            const cplx root = std::sqrt(lp * lp - wo * wo);
            poles.push_back(lp + root);
            poles.push_back(lp - root);
        }
        gain = std::pow(bw, order);
        zeros_at_dc = static_cast<std::size_t>(order);
    }

    // bilinear transform; analog zeros at s = 0 map to z = 1, zeros at infinity to z = -1
    cplx den = 1.0;
    std::vector<cplx> zpoles;
    for (auto p : poles) {
        den *= fs2 - p;
        zpoles.push_back((fs2 + p) / (fs2 - p));
    }
    const double num = std::pow(fs2, static_cast<double>(zeros_at_dc));
    gain *= (num / den).real();

    std::vector<cplx> upper;
    for (auto p : zpoles)
        if (p.imag() > 0.0)
            upper.push_back(p);
    if (upper.size() * 2 != zpoles.size())
        throw ProcessingError("Butterworth design produced unpaired real poles");
    std::sort(upper.begin(), upper.end(), [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });

    SosFilter f;
    for (auto p : upper) {
        std::array<double, 6> s{};
        if (spec.kind == FilterKind::lowpass)
            s = {1.0, 2.0, 1.0, 1.0, -2.0 * p.real(), std::norm(p)};
        else
            s = {1.0, 0.0, -1.0, 1.0, -2.0 * p.real(), std::norm(p)};
        f.sections.push_back(s);
    }
    for (std::size_t i = 0; i < 3; ++i)
        f.sections.front()[i] *= gain;
    return f;
}

std::complex<double> frequency_response(const SosFilter& filter, double freq_hz, double fs)
{
    const cplx z1 = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / fs);
    const cplx z2 = z1 * z1;
    cplx h = 1.0;
    for (const auto& s : filter.sections)
        h *= (s[0] + s[1] * z1 + s[2] * z2) / (s[3] + s[4] * z1 + s[5] * z2);
    return h;
}

std::vector<double> sosfilt(const SosFilter& filter, const std::vector<double>& x,
                            std::vector<std::array<double, 2>>* state)
{
    std::vector<std::array<double, 2>> local(filter.sections.size(), {0.0, 0.0});
    auto& z = state ? *state : local;
    if (z.size() != filter.sections.size())
        throw ShapeError("filter state has the wrong number of sections");
    std::vector<double> y = x;
    for (std::size_t si = 0; si < filter.sections.size(); ++si) {
        const auto& s = filter.sections[si];
        double z0 = z[si][0], z1 = z[si][1];
        for (double& v : y) {
            const double in = v;
            const double out = s[0] * in + z0;
            z0 = s[1] * in - s[4] * out + z1;
            z1 = s[2] * in - s[5] * out;
            v = out;
        }
        z[si] = {z0, z1};
    }
    return y;
}

std::vector<std::array<double, 2>> sosfilt_steady_state(const SosFilter& filter)
{
    std::vector<std::array<double, 2>> zi;
    double scale = 1.0;
    for (const auto& s : filter.sections) {
        const double b0 = s[0], b1 = s[1], b2 = s[2], a1 = s[4], a2 = s[5];
        const double z0 = (b1 + b2 - b0 * (a1 + a2)) / (1.0 + a1 + a2);
        const double z1 = b2 - a2 * b0 - a2 * z0;
        zi.push_back({scale * z0, scale * z1});
        scale *= (b0 + b1 + b2) / (1.0 + a1 + a2);
    }
    return zi;
}

std::vector<double> filtfilt(const SosFilter& filter, const std::vector<double>& x)
{
    const std::size_t pad = 3 * filter.order();
    if (x.size() <= pad)
        throw UsageError("signal of " + std::to_string(x.size()) + " samples is too short for a order-" +
                         std::to_string(filter.order()) + " zero-phase filter; pad it to more than " +
                         std::to_string(pad) + " samples");
    const std::size_t n = x.size();
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i)
        ext.push_back(2.0 * x.front() - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i)
        ext.push_back(2.0 * x.back() - x[n - 1 - i]);

    const auto zi = sosfilt_steady_state(filter);
    auto scaled = [&](double v) {
        auto z = zi;
        for (auto& s : z) {
            s[0] *= v;
            s[1] *= v;
        }
        return z;
    };

    // start each pass in the steady state of the padding's mean level, so an
    // oscillating edge does not inject a step into slow highpass sections
    auto lead_mean = [pad](const std::vector<double>& v) {
        double acc = 0.0;
        for (std::size_t i = 0; i < pad; ++i)
            acc += v[i];
        return acc / static_cast<double>(pad);
    };
    auto state = scaled(lead_mean(ext));
    std::vector<double> y = sosfilt(filter, ext, &state);
    std::reverse(y.begin(), y.end());
    state = scaled(lead_mean(y));
    y = sosfilt(filter, y, &state);
    std::reverse(y.begin(), y.end());
    return {y.begin() + static_cast<std::ptrdiff_t>(pad), y.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

Signal apply_filter(const Signal& s, const FilterSpec& f)
{
    validate(s);
    const SosFilter filter = design_butterworth(f, s.sample_rate_hz);
    Signal out = s;
    out.samples = filtfilt(filter, s.samples);
    return out;
}

}  // namespace biomoe
