#include "biomoe/config.hpp"

#include "biomoe/error.hpp"
#include "biomoe/image.hpp"

#include <json.hpp>

#include <functional>

namespace biomoe {

namespace {

using json = nlohmann::json;
using Handler = std::function<void(const json&, const std::string&)>;

[[noreturn]] void fail(const std::string& path, const std::string& msg)
{
    throw UsageError("config " + path + ": " + msg);
}

// Dispatches each key of an object to its handler; anything unlisted is an error.
void walk(const json& obj, const std::string& path, const std::map<std::string, Handler>& handlers)
{
    if (!obj.is_object())
        fail(path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
        const auto it = handlers.find(key);
        if (it == handlers.end())
            fail(path + "." + key, "unknown key");
        it->second(value, path + "." + key);
    }
}

std::uint64_t as_uint(const json& v, const std::string& path)
{
    if (!v.is_number_unsigned())
        fail(path, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

std::size_t as_size(const json& v, const std::string& path)
{
    return static_cast<std::size_t>(as_uint(v, path));
}

double as_double(const json& v, const std::string& path)
{
    if (!v.is_number())
        fail(path, "expected a number");
    return v.get<double>();
}

bool as_bool(const json& v, const std::string& path)
{
    if (!v.is_boolean())
        fail(path, "expected true or false");
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path)
{
    if (!v.is_string())
        fail(path, "expected a string");
    return v.get<std::string>();
}

template <std::size_t N>
std::array<std::size_t, N> as_sizes(const json& v, const std::string& path)
{
    if (!v.is_array() || v.size() != N)
        fail(path, "expected an array of " + std::to_string(N) + " integers");
    std::array<std::size_t, N> out{};
    for (std::size_t i = 0; i < N; ++i)
        out[i] = as_size(v[i], path + "[" + std::to_string(i) + "]");
    return out;
}

// Rethrows parse helpers' UsageError with the key path prefixed.
template <typename F>
auto with_path(const std::string& path, F&& f)
{
    try {
        return f();
    } catch (const UsageError& e) {
        fail(path, e.what());
    }
}

void read_model(const json& j, const std::string& p, ModelConfig& m)
{
    walk(j, p,
         {{"image", [&](const json& v, const std::string& q) { m.image = as_size(v, q); }},
          {"embed_dim", [&](const json& v, const std::string& q) { m.embed_dim = as_size(v, q); }},
          {"n_classes", [&](const json& v, const std::string& q) { m.n_classes = as_size(v, q); }},
          {"enc1_dims", [&](const json& v, const std::string& q) { m.enc1_dims = as_sizes<4>(v, q); }},
          {"enc1_depths", [&](const json& v, const std::string& q) { m.enc1_depths = as_sizes<4>(v, q); }},
          {"enc1_mlp_ratios", [&](const json& v, const std::string& q) { m.enc1_mlp_ratios = as_sizes<4>(v, q); }},
          {"enc1_stem_patch", [&](const json& v, const std::string& q) { m.enc1_stem_patch = as_size(v, q); }},
          {"enc1_spectral_stages", [&](const json& v, const std::string& q) { m.enc1_spectral_stages = as_size(v, q); }},
          {"enc2_dims", [&](const json& v, const std::string& q) { m.enc2_dims = as_sizes<3>(v, q); }},
          {"enc2_heads", [&](const json& v, const std::string& q) { m.enc2_heads = as_sizes<3>(v, q); }},
          {"enc2_depths", [&](const json& v, const std::string& q) { m.enc2_depths = as_sizes<3>(v, q); }},
          {"enc2_ffn_ratios", [&](const json& v, const std::string& q) { m.enc2_ffn_ratios = as_sizes<3>(v, q); }},
          {"enc2_stem_channels", [&](const json& v, const std::string& q) { m.enc2_stem_channels = as_sizes<4>(v, q); }},
          {"enc2_key_dim", [&](const json& v, const std::string& q) { m.enc2_key_dim = as_size(v, q); }},
          {"enc2_merge_ratio", [&](const json& v, const std::string& q) { m.enc2_merge_ratio = as_size(v, q); }}});
    with_path(p, [&] { m.validate(); });
}

std::string_view filter_kind_name(FilterKind k)
{
    return k == FilterKind::lowpass ? "lowpass" : "bandpass";
}

void read_filters(const json& j, const std::string& p, std::map<Modality, FilterSpec>& out)
{
    if (!j.is_object())
        fail(p, "expected an object keyed by modality");
    for (const auto& [key, value] : j.items()) {
        const std::string q = p + "." + key;
        const Modality m = with_path(q, [&] { return parse_modality(key); });
        FilterSpec f;
        bool has_kind = false;
        walk(value, q,
             {{"kind",
               [&](const json& v, const std::string& r) {
                   const std::string k = as_string(v, r);
                   if (k == "lowpass")
                       f.kind = FilterKind::lowpass;
                   else if (k == "bandpass")
                       f.kind = FilterKind::bandpass;
                   else
                       fail(r, "expected \"lowpass\" or \"bandpass\"");
                   has_kind = true;
               }},
              {"lo_hz", [&](const json& v, const std::string& r) { f.lo_hz = as_double(v, r); }},
              {"hi_hz", [&](const json& v, const std::string& r) { f.hi_hz = as_double(v, r); }}});
        if (!has_kind)
            fail(q, "missing \"kind\"");
        if (!(f.hi_hz > 0.0) || (f.kind == FilterKind::bandpass && !(f.lo_hz > 0.0 && f.lo_hz < f.hi_hz)))
            fail(q, "cutoffs must be positive with lo_hz < hi_hz");
        out[m] = f;
    }
}

void read_fusion(const json& j, const std::string& p, std::optional<FusionPlan>& out)
{
    FusionPlan plan;
    bool has_inputs = false;
    walk(j, p,
         {{"method",
           [&](const json& v, const std::string& q) {
               plan.method = with_path(q, [&] { return parse_fusion_method(as_string(v, q)); });
           }},
          {"inputs", [&](const json& v, const std::string& q) {
               if (!v.is_array())
                   fail(q, "expected an array of \"MODALITY:representation\" tags");
               for (std::size_t i = 0; i < v.size(); ++i) {
                   const std::string r = q + "[" + std::to_string(i) + "]";
                   plan.inputs.push_back(with_path(r, [&] { return parse_fusion_input(as_string(v[i], r)); }));
               }
               has_inputs = true;
           }}});
    if (!has_inputs)
        fail(p, "missing \"inputs\"");
    with_path(p, [&] { plan.validate(); });
    out = plan;
}

void read_stft(const json& j, const std::string& p, StftConfig& s)
{
    walk(j, p,
         {{"window_len", [&](const json& v, const std::string& q) { s.window_len = as_size(v, q); }},
          {"hop", [&](const json& v, const std::string& q) { s.hop = as_size(v, q); }},
          {"fft_len", [&](const json& v, const std::string& q) { s.fft_len = as_size(v, q); }}});
    with_path(p, [&] { s.validate(); });
}

void read_schedule(const json& j, const std::string& p, ScheduleConfig& s)
{
    walk(j, p,
         {{"total_steps", [&](const json& v, const std::string& q) { s.total_steps = as_size(v, q); }},
          {"p_start", [&](const json& v, const std::string& q) { s.p_start = as_double(v, q); }},
          {"p_end", [&](const json& v, const std::string& q) { s.p_end = as_double(v, q); }},
          {"eps_start", [&](const json& v, const std::string& q) { s.eps_start = as_double(v, q); }},
          {"eps_end", [&](const json& v, const std::string& q) { s.eps_end = as_double(v, q); }},
          {"warmup", [&](const json& v, const std::string& q) { s.warmup = as_size(v, q); }},
          {"cooldown", [&](const json& v, const std::string& q) { s.cooldown = as_size(v, q); }},
          {"base_lr", [&](const json& v, const std::string& q) { s.base_lr = as_double(v, q); }},
          {"lr_floor", [&](const json& v, const std::string& q) { s.lr_floor = as_double(v, q); }},
          {"batch_size", [&](const json& v, const std::string& q) { s.batch_size = as_size(v, q); }},
          {"epochs", [&](const json& v, const std::string& q) { s.epochs = as_size(v, q); }}});
    with_path(p, [&] { s.validate(); });
}

void read_augment(const json& j, const std::string& p, AugmentConfig& a)
{
    auto num = [](double& field) {
        return [&field](const json& v, const std::string& q) { field = as_double(v, q); };
    };
    auto count = [](std::size_t& field) {
        return [&field](const json& v, const std::string& q) { field = as_size(v, q); };
    };
    auto flag = [](bool& field) {
        return [&field](const json& v, const std::string& q) { field = as_bool(v, q); };
    };
    walk(j, p,
         {{"contrast_max", num(a.contrast_max)},
          {"color_max", num(a.color_max)},
          {"rotate_max_deg", num(a.rotate_max_deg)},
          {"translate_max", num(a.translate_max)},
          {"shear_max_deg", num(a.shear_max_deg)},
          {"use_augmix", flag(a.use_augmix)},
          {"augmix_chains", count(a.augmix_chains)},
          {"augmix_depth_min", count(a.augmix_depth_min)},
          {"augmix_depth_max", count(a.augmix_depth_max)},
          {"augmix_alpha", num(a.augmix_alpha)},
          {"augmix_skip_prob", num(a.augmix_skip_prob)},
          {"use_trivial", flag(a.use_trivial)},
          {"crop_prob_min", num(a.crop_prob_min)},
          {"crop_prob_max", num(a.crop_prob_max)},
          {"crop_ratio_min", num(a.crop_ratio_min)},
          {"crop_ratio_max", num(a.crop_ratio_max)},
          {"blur_prob", num(a.blur_prob)},
          {"blur_sigma_min", num(a.blur_sigma_min)},
          {"blur_sigma_max", num(a.blur_sigma_max)},
          {"cutout_small", count(a.cutout_small)},
          {"cutout_large", count(a.cutout_large)},
          {"cutout_block", count(a.cutout_block)}});
    with_path(p, [&] { a.validate(); });
}

void read_io(const json& j, const std::string& p, IoPaths& io)
{
    auto str = [](std::string& field) {
        return [&field](const json& v, const std::string& q) { field = as_string(v, q); };
    };
    walk(j, p,
         {{"input", str(io.input)},
          {"output", str(io.output)},
          {"weights", str(io.weights)},
          {"labels", str(io.labels)},
          {"pred_dir", str(io.pred_dir)}});
}

}  // namespace

FilterSpec RunConfig::filter_for(Modality m) const
{
    const auto it = filters.find(m);
    return it != filters.end() ? it->second : default_filter(m);
}

RunConfig parse_run_config(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig cfg;
    walk(root, "$",
         {{"model", [&](const json& v, const std::string& p) { read_model(v, p, cfg.model); }},
          {"filters", [&](const json& v, const std::string& p) { read_filters(v, p, cfg.filters); }},
          {"representations",
           [&](const json& v, const std::string& p) {
               if (!v.is_array())
                   fail(p, "expected an array of representation names");
               for (std::size_t i = 0; i < v.size(); ++i) {
                   const std::string q = p + "[" + std::to_string(i) + "]";
                   cfg.representations.push_back(with_path(q, [&] { return parse_representation(as_string(v[i], q)); }));
               }
           }},
          {"fusion", [&](const json& v, const std::string& p) { read_fusion(v, p, cfg.fusion); }},
          {"stft", [&](const json& v, const std::string& p) { read_stft(v, p, cfg.stft); }},
          {"sample_rate_hz",
           [&](const json& v, const std::string& p) {
               const double fs = as_double(v, p);
               if (!(fs > 0.0))
                   fail(p, "must be positive");
               cfg.sample_rate_hz = fs;
           }},
          {"seed", [&](const json& v, const std::string& p) { cfg.seed = as_uint(v, p); }},
          {"schedule", [&](const json& v, const std::string& p) { read_schedule(v, p, cfg.schedule); }},
          {"augment", [&](const json& v, const std::string& p) { read_augment(v, p, cfg.augment); }},
          {"loss",
           [&](const json& v, const std::string& p) {
               cfg.loss = with_path(p, [&] { return parse_loss_variant(as_string(v, p)); });
           }},
          {"io", [&](const json& v, const std::string& p) { read_io(v, p, cfg.io); }}});
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    const auto bytes = read_file(path);
    return parse_run_config(std::string(bytes.begin(), bytes.end()));
}

std::string dump_run_config(const RunConfig& cfg)
{
    // ordered_json keeps the layout stable for diffing
    using oj = nlohmann::ordered_json;
    const auto& m = cfg.model;
    oj root;
    root["model"] = {{"image", m.image},
                     {"embed_dim", m.embed_dim},
                     {"n_classes", m.n_classes},
                     {"enc1_dims", m.enc1_dims},
                     {"enc1_depths", m.enc1_depths},
                     {"enc1_mlp_ratios", m.enc1_mlp_ratios},
                     {"enc1_stem_patch", m.enc1_stem_patch},
                     {"enc1_spectral_stages", m.enc1_spectral_stages},
                     {"enc2_dims", m.enc2_dims},
                     {"enc2_heads", m.enc2_heads},
                     {"enc2_depths", m.enc2_depths},
                     {"enc2_ffn_ratios", m.enc2_ffn_ratios},
                     {"enc2_stem_channels", m.enc2_stem_channels},
                     {"enc2_key_dim", m.enc2_key_dim},
                     {"enc2_merge_ratio", m.enc2_merge_ratio}};
    oj filters = oj::object();
    for (const auto& [mod, f] : cfg.filters) {
        oj spec = {{"kind", filter_kind_name(f.kind)}, {"hi_hz", f.hi_hz}};
        if (f.kind == FilterKind::bandpass)
            spec["lo_hz"] = f.lo_hz;
        filters[std::string(to_string(mod))] = spec;
    }
    root["filters"] = filters;
    oj reps = oj::array();
    for (auto k : cfg.representations)
        reps.push_back(to_string(k));
    root["representations"] = reps;
    if (cfg.fusion) {
        oj inputs = oj::array();
        for (const auto& in : cfg.fusion->inputs)
            inputs.push_back(to_string(in));
        root["fusion"] = {{"method", to_string(cfg.fusion->method)}, {"inputs", inputs}};
    }
    root["stft"] = {{"window_len", cfg.stft.window_len}, {"hop", cfg.stft.hop}, {"fft_len", cfg.stft.fft_len}};
    if (cfg.sample_rate_hz)
        root["sample_rate_hz"] = *cfg.sample_rate_hz;
    root["seed"] = cfg.seed;
    const auto& s = cfg.schedule;
    root["schedule"] = {{"total_steps", s.total_steps}, {"p_start", s.p_start},   {"p_end", s.p_end},
                        {"eps_start", s.eps_start},     {"eps_end", s.eps_end},   {"warmup", s.warmup},
                        {"cooldown", s.cooldown},       {"base_lr", s.base_lr},   {"lr_floor", s.lr_floor},
                        {"batch_size", s.batch_size},   {"epochs", s.epochs}};
    const auto& a = cfg.augment;
    root["augment"] = {{"contrast_max", a.contrast_max},
                       {"color_max", a.color_max},
                       {"rotate_max_deg", a.rotate_max_deg},
                       {"translate_max", a.translate_max},
                       {"shear_max_deg", a.shear_max_deg},
                       {"use_augmix", a.use_augmix},
                       {"augmix_chains", a.augmix_chains},
                       {"augmix_depth_min", a.augmix_depth_min},
                       {"augmix_depth_max", a.augmix_depth_max},
                       {"augmix_alpha", a.augmix_alpha},
                       {"augmix_skip_prob", a.augmix_skip_prob},
                       {"use_trivial", a.use_trivial},
                       {"crop_prob_min", a.crop_prob_min},
                       {"crop_prob_max", a.crop_prob_max},
                       {"crop_ratio_min", a.crop_ratio_min},
                       {"crop_ratio_max", a.crop_ratio_max},
                       {"blur_prob", a.blur_prob},
                       {"blur_sigma_min", a.blur_sigma_min},
                       {"blur_sigma_max", a.blur_sigma_max},
                       {"cutout_small", a.cutout_small},
                       {"cutout_large", a.cutout_large},
                       {"cutout_block", a.cutout_block}};
    root["loss"] = to_string(cfg.loss);
    root["io"] = {{"input", cfg.io.input},
                  {"output", cfg.io.output},
                  {"weights", cfg.io.weights},
                  {"labels", cfg.io.labels},
                  {"pred_dir", cfg.io.pred_dir}};
    return root.dump(2) + "\n";
}

}  // namespace biomoe
