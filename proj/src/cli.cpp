#include "biomoe/cli.hpp"

#include "biomoe/augmentation.hpp"
#include "biomoe/config.hpp"
#include "biomoe/container.hpp"
#include "biomoe/error.hpp"
#include "biomoe/fusion.hpp"
#include "biomoe/image.hpp"
#include "biomoe/model.hpp"
#include "biomoe/representations.hpp"
#include "biomoe/signal.hpp"
#include "biomoe/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

namespace biomoe::cli {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string format_float(double v, const char* fmt = "%.9g")
{
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

// Re-raises an Error of the same kind with the stage and file prepended.
[[noreturn]] void rethrow_in_stage(const std::string& stage, const std::string& file)
{
    const std::string where = "stage '" + stage + "'" + (file.empty() ? "" : " (" + file + ")") + ": ";
    try {
        throw;
    } catch (const UsageError& e) {
        throw UsageError(where + e.what());
    } catch (const ProcessingError& e) {
        throw ProcessingError(where + e.what());
    } catch (const IntegrityError& e) {
        throw IntegrityError(where + e.what());
    } catch (const ShapeError& e) {
        throw ShapeError(where + e.what());
    } catch (const std::exception& e) {
        throw ProcessingError(where + e.what());
    }
}

template <typename F>
auto stage(const std::string& name, const std::string& file, F&& f)
{
    try {
        return f();
    } catch (...) {
        rethrow_in_stage(name, file);
    }
}

void write_text_atomic(const fs::path& path, const std::string& text)
{
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Options shared by every subcommand.
struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* sub)
    {
        sub->add_option("--config", config_path, "RunConfig JSON file");
        sub->add_option("--seed", seed, "Seed for all stochastic behaviour (default 0 or the config's seed)");
    }

    RunConfig load() const
    {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        if (seed)
            cfg.seed = *seed;
        return cfg;
    }
};

struct SignalInput {
    std::string modality;
    double fs = 0.0;
    std::size_t column = 0;
    bool skip_header = false;
    bool no_filter = false;

    void attach(CLI::App* sub, bool modality_required)
    {
        auto* m = sub->add_option("--modality", modality, "EDA, BVP, RESP, SPO2 or OTHER");
        if (modality_required)
            m->required();
        sub->add_option("--fs", fs, "Sample rate in Hz (else the config's sample_rate_hz)");
        sub->add_option("--column", column, "0-based CSV column");
        sub->add_flag("--skip-header", skip_header, "Ignore the first CSV line");
        sub->add_flag("--no-filter", no_filter, "Render the raw signal");
    }

    Signal load_filtered(const std::string& path, const RunConfig& cfg) const
    {
        const Modality mod = stage("parse arguments", "", [&] { return parse_modality(modality); });
        const double rate = fs > 0.0 ? fs : cfg.sample_rate_hz.value_or(0.0);
        if (!(rate > 0.0))
            throw UsageError("a sample rate is required (--fs or sample_rate_hz in the config)");
        Signal s = stage("load", path, [&] { return load_csv(path, rate, mod, {column, skip_header}); });
        if (no_filter)
            return s;
        return stage("filter", path, [&] {
            const FilterSpec f = cfg.filter_for(mod);
            return apply_filter(s, f);
        });
    }
};

bool is_png(const std::string& path)
{
    return lower(fs::path(path).extension().string()) == ".png";
}

// ---------------------------------------------------------------- render

struct RenderCmd {
    Common common;
    SignalInput signal;
    std::vector<std::string> inputs;
    std::string kind = "all";
    std::string out_dir;

    void attach(CLI::App& app)
    {
        auto* sub = app.add_subcommand("render", "Filter signals and render representation images");
        common.attach(sub);
        signal.attach(sub, true);
        sub->add_option("inputs", inputs, "Signal CSV files")->required();
        sub->add_option("--kind", kind, "angle, phase, psd, recurrence, scalogram, waveform or all");
        sub->add_option("--out", out_dir, "Output directory")->required();
        sub->callback([this] { selected = true; });
    }

    int run(std::ostream& out) const
    {
        const RunConfig cfg = common.load();
        std::vector<RepresentationKind> kinds;
        if (lower(kind) == "all")
            kinds.assign(std::begin(kAllRepresentations), std::end(kAllRepresentations));
        else
            kinds.push_back(stage("parse arguments", "", [&] { return parse_representation(kind); }));
        // load and filter every input first so usage problems surface before any file is written
        std::vector<Signal> signals(inputs.size());
        parallel_for(inputs.size(), worker_count(), [&](std::size_t i) { signals[i] = signal.load_filtered(inputs[i], cfg); });
        fs::create_directories(out_dir);
        std::vector<std::string> written(inputs.size() * kinds.size());
        parallel_for(written.size(), worker_count(), [&](std::size_t job) {
            const std::size_t i = job / kinds.size();
            const RepresentationKind k = kinds[job % kinds.size()];
            const Image img = stage("render " + std::string(to_string(k)), inputs[i],
                                    [&] { return render_representation(signals[i], k, cfg.stft); });
            const fs::path target =
                fs::path(out_dir) / (fs::path(inputs[i]).stem().string() + "_" + std::string(to_string(k)) + ".png");
            stage("write", target.string(), [&] { write_png(target, img); });
            written[job] = target.string();
        });
        for (const auto& w : written)
            out << w << "\n";
        return 0;
    }

    bool selected = false;
};

// ---------------------------------------------------------------- embed

struct EmbedCmd {
    Common common;
    SignalInput signal;
    std::vector<std::string> inputs;
    std::string weights;
    std::string init;
    std::string kind = "scalogram";
    std::string fuse_method;
    std::string out_path;
    bool per_encoder = false;

    void attach(CLI::App& app)
    {
        auto* sub = app.add_subcommand("embed", "Run the model and print the fused embedding");
        common.attach(sub);
        signal.attach(sub, false);
        sub->add_option("inputs", inputs, "224x224 PNG images or signal CSV files")->required();
        sub->add_option("--weights", weights, "Weight container");
        sub->add_option("--init", init, "\"random\" to use seeded random weights instead of a container");
        sub->add_option("--kind", kind, "Representation rendered from CSV inputs");
        sub->add_option("--fuse", fuse_method, "ADD or CONCAT: combine the embeddings of several inputs");
        sub->add_option("--out", out_path, "Write the vector here instead of stdout");
        sub->add_flag("--per-encoder", per_encoder, "Also print both 96-d encoder outputs");
        sub->callback([this] { selected = true; });
    }

    WeightStore load_weights(const RunConfig& cfg) const
    {
        if (!weights.empty() && !init.empty())
            throw UsageError("--weights and --init are mutually exclusive");
        if (!weights.empty()) {
            WeightStore w = stage("load weights", weights, [&] { return load_container(weights); });
            stage("validate weights", weights, [&] { validate_weights(w, cfg.model); });
            return w;
        }
        if (lower(init) == "random")
            return init_random(cfg.model, cfg.seed);
        throw UsageError("give --weights FILE or --init random");
    }

    Image load_image(const std::string& path, const RunConfig& cfg) const
    {
        if (is_png(path)) {
            Image img = stage("load", path, [&] { return read_png(path); });
            stage("load", path, [&] { require_model_input(img); });
            return img;
        }
        const RepresentationKind k = stage("parse arguments", "", [&] { return parse_representation(kind); });
        const Signal s = signal.load_filtered(path, cfg);
        return stage("render", path, [&] { return render_representation(s, k, cfg.stft); });
    }

    int run(std::ostream& out) const
    {
        const RunConfig cfg = common.load();
        std::optional<FusionMethod> method;
        if (!fuse_method.empty())
            method = stage("parse arguments", "", [&] { return parse_fusion_method(fuse_method); });
        else if (cfg.fusion)
            method = cfg.fusion->method;
        if (inputs.size() > 1 && !method)
            throw UsageError("several inputs need --fuse ADD|CONCAT or a fusion section in the config");
        const WeightStore w = load_weights(cfg);
        if (signal.modality.empty())
            for (const auto& in : inputs)
                if (!is_png(in))
                    throw UsageError("CSV input " + in + " needs --modality");

        std::vector<ModelOutput> outputs(inputs.size());
        parallel_for(inputs.size(), worker_count(), [&](std::size_t i) {
            const Image img = load_image(inputs[i], cfg);
            outputs[i] = stage("forward", inputs[i], [&] { return model_forward(img, w, cfg.model); });
        });

        std::ostringstream text;
        auto emit = [&](const char* header, const Tensor& t) {
            if (per_encoder)
                text << "# " << header << "\n";
            for (float v : t.data())
                text << format_float(v) << "\n";
        };
        if (inputs.size() == 1) {
            emit("fused", outputs[0].fused);
            if (per_encoder) {
                emit("z1", outputs[0].z1);
                emit("z2", outputs[0].z2);
            }
        } else {
            std::vector<Tensor> fused;
            for (const auto& o : outputs)
                fused.push_back(o.fused);
            emit("fused", stage("fuse", "", [&] { return fuse(fused, *method); }));
            if (per_encoder)
                for (std::size_t i = 0; i < outputs.size(); ++i) {
                    emit(("z1 " + inputs[i]).c_str(), outputs[i].z1);
                    emit(("z2 " + inputs[i]).c_str(), outputs[i].z2);
                }
        }
        if (out_path.empty())
            out << text.str();
        else
            stage("write", out_path, [&] { write_text_atomic(out_path, text.str()); });
        return 0;
    }

    bool selected = false;
};

// ---------------------------------------------------------------- audit

struct AuditCmd {
    Common common;
    std::string format = "text";
    std::size_t input = kImageSize;
    bool layers = false;
    std::string out_path;

    void attach(CLI::App& app)
    {
        auto* sub = app.add_subcommand("audit", "Report parameter and FLOP counts against the target budget");
        common.attach(sub);
        sub->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}));
        sub->add_option("--input", input, "Input side length");
        sub->add_flag("--layers", layers, "List every layer");
        sub->add_option("--out", out_path, "Write the report here instead of stdout");
        sub->callback([this] { selected = true; });
    }

    int run(std::ostream& out) const
    {
        const RunConfig cfg = common.load();
        const CostReport r = audit_costs(cfg.model, input);
        struct Row {
            std::string part;
            std::uint64_t params, flops;
            double ptarget, ftarget, ptol, ftol;
        };
        const std::vector<Row> rows{
            {"encoder1", r.params("enc1"), r.flops("enc1"), kParamTarget.enc1, kFlopTarget.enc1, kParamTarget.enc_tolerance,
             kFlopTarget.enc_tolerance},
            {"encoder2", r.params("enc2"), r.flops("enc2"), kParamTarget.enc2, kFlopTarget.enc2, kParamTarget.enc_tolerance,
             kFlopTarget.enc_tolerance},
            {"fusion", r.params("fusion"), r.flops("fusion"), 0, 0, 0, 0},
            {"total", r.total_params(), r.total_flops(), kParamTarget.total, kFlopTarget.total,
             kParamTarget.total_tolerance, kFlopTarget.total_tolerance}};
        auto delta = [](double got, double target) { return 100.0 * (got / target - 1.0); };
        auto within = [](double got, double target, double tol) { return std::abs(got / target - 1.0) <= tol; };

        std::ostringstream s;
        if (format == "csv") {
            s << "part,params,params_target,params_delta_pct,params_ok,flops,flops_target,flops_delta_pct,flops_ok\n";
            for (const auto& row : rows) {
                s << row.part << "," << row.params << ",";
                if (row.ptarget > 0)
                    s << format_float(row.ptarget, "%.0f") << "," << format_float(delta(row.params, row.ptarget), "%.2f") << ","
                      << (within(row.params, row.ptarget, row.ptol) ? "yes" : "no");
                else
                    s << ",,";
                s << "," << row.flops << ",";
                if (row.ftarget > 0)
                    s << format_float(row.ftarget, "%.0f") << "," << format_float(delta(row.flops, row.ftarget), "%.2f") << ","
                      << (within(row.flops, row.ftarget, row.ftol) ? "yes" : "no");
                else
                    s << ",,";
                s << "\n";
            }
            if (layers) {
                s << "\nlayer,group,params,flops\n";
                for (const auto& l : r.layers)
                    s << l.name << "," << l.group << "," << l.params << "," << l.flops << "\n";
            }
        } else {
            char line[256];
            std::snprintf(line, sizeof line, "%-9s %10s %8s %9s  %10s %8s %9s\n", "part", "params", "target", "delta",
                          "flops", "target", "delta");
            s << line;
            for (const auto& row : rows) {
                const std::string pm = format_float(row.params / 1e6, "%.3fM");
                const std::string fg = format_float(row.flops / 1e9, "%.3fG");
                if (row.ptarget > 0) {
                    const std::string pd = format_float(delta(row.params, row.ptarget), "%+.2f%%") +
                                           (within(row.params, row.ptarget, row.ptol) ? "" : "!");
                    const std::string fd = format_float(delta(row.flops, row.ftarget), "%+.2f%%") +
                                           (within(row.flops, row.ftarget, row.ftol) ? "" : "!");
                    std::snprintf(line, sizeof line, "%-9s %10s %8s %9s  %10s %8s %9s\n", row.part.c_str(), pm.c_str(),
                                  format_float(row.ptarget / 1e6, "%.2fM").c_str(), pd.c_str(), fg.c_str(),
                                  format_float(row.ftarget / 1e9, "%.2fG").c_str(), fd.c_str());
                } else {
                    std::snprintf(line, sizeof line, "%-9s %10s %8s %9s  %10s %8s %9s\n", row.part.c_str(), pm.c_str(), "-",
                                  "-", fg.c_str(), "-", "-");
                }
                s << line;
            }
            s << "tolerances: params +-" << kParamTarget.enc_tolerance * 100 << "% per encoder, +-"
              << kParamTarget.total_tolerance * 100 << "% total; FLOPs +-" << kFlopTarget.enc_tolerance * 100
              << "% per encoder, +-" << kFlopTarget.total_tolerance * 100 << "% total (1 MAC = 2 FLOPs)\n";
            if (layers) {
                s << "\n";
                for (const auto& l : r.layers) {
                    std::snprintf(line, sizeof line, "%-48s %-6s %10llu %14llu\n", l.name.c_str(), l.group.c_str(),
                                  static_cast<unsigned long long>(l.params), static_cast<unsigned long long>(l.flops));
                    s << line;
                }
            }
        }
        if (out_path.empty())
            out << s.str();
        else
            stage("write", out_path, [&] { write_text_atomic(out_path, s.str()); });
        return 0;
    }

    bool selected = false;
};

// ---------------------------------------------------------------- eval

std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',' || c == ';' || c == '\t' || c == ' ' || c == '\r') {
            if (!cur.empty())
                out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty())
        out.push_back(cur);
    return out;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Class index from "2", "High Pain", "high_pain" or "HighPain".
std::optional<std::size_t> parse_class(std::string token, std::size_t n_classes)
{
    token = trim(token);
    if (!token.empty() && std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); })) {
        const auto v = std::stoull(token);
        if (v < n_classes)
            return static_cast<std::size_t>(v);
        return std::nullopt;
    }
    auto norm = [](std::string s) {
        std::string o;
        for (unsigned char c : s)
            if (std::isalnum(c))
                o += static_cast<char>(std::tolower(c));
        return o;
    };
    const auto& names = pain_class_names();
    for (std::size_t i = 0; i < names.size() && i < n_classes; ++i)
        if (norm(token) == norm(names[i]))
            return i;
    return std::nullopt;
}

struct EvalCmd {
    Common common;
    std::string pred_dir;
    std::string labels;
    std::size_t classes = 0;
    bool per_class = false;
    std::string format = "text";

    void attach(CLI::App& app)
    {
        auto* sub = app.add_subcommand("eval", "Macro-averaged accuracy, precision and F1 of stored predictions");
        common.attach(sub);
        sub->add_option("--pred-dir", pred_dir, "Directory of <id>.txt predictions (class or probabilities)")->required();
        sub->add_option("--labels", labels, "CSV of id,label")->required();
        sub->add_option("--classes", classes, "Number of classes (default from the config, 3)");
        sub->add_flag("--per-class", per_class, "Also print per-class recall, precision and F1");
        sub->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}));
        sub->callback([this] { selected = true; });
    }

    std::size_t read_prediction(const fs::path& file, std::size_t n) const
    {
        std::ifstream in(file);
        if (!in)
            throw UsageError("cannot open " + file.string());
        std::stringstream ss;
        ss << in.rdbuf();
        std::vector<std::string> tokens;
        std::string line;
        while (std::getline(ss, line))
            for (auto& t : split_fields(line))
                tokens.push_back(t);
        if (tokens.empty())
            throw UsageError(file.string() + " is empty");
        if (tokens.size() == 1) {
            if (auto c = parse_class(tokens[0], n))
                return *c;
            throw UsageError(file.string() + ": unknown class '" + tokens[0] + "'");
        }
        // a whole-line class name like "High Pain" splits into words
        std::string joined;
        for (const auto& t : tokens)
            joined += t;
        const bool numeric = std::all_of(tokens.begin(), tokens.end(), [](const std::string& t) {
            return std::isdigit(static_cast<unsigned char>(t[0])) || t[0] == '.' || t[0] == '-' || t[0] == '+';
        });
        if (auto c = parse_class(joined, n); c && !numeric)
            return *c;
        if (tokens.size() != n)
            throw ShapeError(file.string() + ": expected 1 class or " + std::to_string(n) + " probabilities, got " +
                             std::to_string(tokens.size()) + " values");
        std::size_t best = 0;
        double best_p = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            double p;
            try {
                std::size_t used = 0;
                p = std::stod(tokens[i], &used);
                if (used != tokens[i].size())
                    throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw UsageError(file.string() + ": '" + tokens[i] + "' is not a probability");
            }
            if (!std::isfinite(p))
                throw ProcessingError(file.string() + ": non-finite probability");
            if (p > best_p) {
                best_p = p;
                best = i;
            }
        }
        return best;
    }

    int run(std::ostream& out) const
    {
        const RunConfig cfg = common.load();
        const std::size_t n = classes ? classes : cfg.model.n_classes;
        std::ifstream in(labels);
        if (!in)
            throw UsageError("cannot open " + labels);
        std::vector<std::pair<std::string, std::size_t>> truth;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            line = trim(line);
            if (line.empty() || line[0] == '#')
                continue;
            const auto comma = line.find(',');
            if (comma == std::string::npos)
                throw UsageError(labels + ":" + std::to_string(lineno) + ": expected id,label");
            const std::string id = trim(line.substr(0, comma)), label = trim(line.substr(comma + 1));
            const auto c = parse_class(label, n);
            if (!c) {
                if (lineno == 1)
                    continue;  // header row
                throw UsageError(labels + ":" + std::to_string(lineno) + ": unknown class '" + label + "'");
            }
            truth.emplace_back(id, *c);
        }
        if (truth.empty())
            throw UsageError(labels + " has no labelled rows");

        std::size_t pred_files = 0;
        for (const auto& e : fs::directory_iterator(pred_dir))
            if (e.is_regular_file() && e.path().extension() == ".txt")
                ++pred_files;
        if (pred_files != truth.size())
            throw UsageError("label/prediction count mismatch: " + std::to_string(truth.size()) + " labels, " +
                             std::to_string(pred_files) + " prediction files");

        ConfusionMatrix cm(n);
        for (const auto& [id, c] : truth) {
            const fs::path file = fs::path(pred_dir) / (id + ".txt");
            if (!fs::exists(file))
                throw UsageError("label/prediction mismatch: no prediction for '" + id + "'");
            cm.add(c, read_prediction(file, n));
        }
        const MacroMetrics m = macro_metrics(cm);
        auto pct = [](double v) { return format_float(100.0 * v, "%.2f"); };
        if (format == "csv") {
            out << "metric,value\naccuracy," << pct(m.accuracy) << "\nprecision," << pct(m.precision) << "\nf1," << pct(m.f1)
                << "\n";
        } else {
            out << "accuracy  " << pct(m.accuracy) << "\nprecision " << pct(m.precision) << "\nf1        " << pct(m.f1)
                << "\n";
        }
        if (per_class)
            for (std::size_t k = 0; k < n; ++k) {
                const std::string name = k < pain_class_names().size() ? pain_class_names()[k] : std::to_string(k);
                out << "class " << k << " (" << name << "): recall " << pct(m.recall_per_class[k]) << " precision "
                    << pct(m.precision_per_class[k]) << " f1 " << pct(m.f1_per_class[k]) << "\n";
            }
        return 0;
    }

    bool selected = false;
};

// ---------------------------------------------------------------- schedule

struct ScheduleCmd {
    Common common;
    std::optional<std::size_t> steps;
    std::size_t every = 1;
    std::string out_path;

    void attach(CLI::App& app)
    {
        auto* sub = app.add_subcommand("schedule", "Emit the lr, dropout and label-smoothing schedules as CSV");
        common.attach(sub);
        sub->add_option("--steps", steps, "Total steps T (warmup 5%, cooldown 10%)");
        sub->add_option("--every", every, "Row stride")->check(CLI::PositiveNumber);
        sub->add_option("--out", out_path, "Write the CSV here instead of stdout");
        sub->callback([this] { selected = true; });
    }

    int run(std::ostream& out) const
    {
        const RunConfig cfg = common.load();
        ScheduleConfig sc = cfg.schedule;
        if (steps) {
            const ScheduleConfig d = ScheduleConfig::for_steps(*steps);
            sc.total_steps = d.total_steps;
            sc.warmup = d.warmup;
            sc.cooldown = d.cooldown;
        }
        sc.validate();
        std::ostringstream s;
        s << "step,lr,dropout,eps\n";
        for (std::size_t t = 0; t <= sc.total_steps; t += every) {
            const double td = static_cast<double>(t);
            s << t << "," << format_float(cosine_lr(td, sc), "%.9e") << "," << format_float(dropout_rate(td, sc), "%.6f")
              << "," << format_float(smoothing_eps(td, sc), "%.6f") << "\n";
            if (t + every > sc.total_steps && t != sc.total_steps) {
                // always close on the final step
                const double T = static_cast<double>(sc.total_steps);
                s << sc.total_steps << "," << format_float(cosine_lr(T, sc), "%.9e") << ","
                  << format_float(dropout_rate(T, sc), "%.6f") << "," << format_float(smoothing_eps(T, sc), "%.6f") << "\n";
                break;
            }
        }
        if (out_path.empty())
            out << s.str();
        else
            stage("write", out_path, [&] { write_text_atomic(out_path, s.str()); });
        return 0;
    }

    bool selected = false;
};

// ---------------------------------------------------------------- augment

struct AugmentCmd {
    Common common;
    std::vector<std::string> inputs;
    std::string out;
    std::uint64_t index = 0;
    std::uint64_t epoch = 0;

    void attach(CLI::App& app)
    {
        auto* sub = app.add_subcommand("augment", "Apply the seeded augmentation pipeline to PNG images");
        common.attach(sub);
        sub->add_option("inputs", inputs, "224x224 PNG images")->required();
        sub->add_option("--out", out, "Output PNG (single input) or directory")->required();
        sub->add_option("--index", index, "Image index of the first input; later inputs count up from it");
        sub->add_option("--epoch", epoch, "Epoch number mixed into the per-image stream");
        sub->callback([this] { selected = true; });
    }

    int run(std::ostream& os) const
    {
        const RunConfig cfg = common.load();
        stage("validate config", "", [&] { cfg.augment.validate(); });
        const bool single_file = inputs.size() == 1 && is_png(out);
        if (!single_file)
            fs::create_directories(out);
        std::vector<std::string> written(inputs.size());
        parallel_for(inputs.size(), worker_count(), [&](std::size_t i) {
            Image img = stage("load", inputs[i], [&] { return read_png(inputs[i]); });
            stage("load", inputs[i], [&] { require_model_input(img); });
            const Image aug = stage("augment", inputs[i], [&] { return augment_image(img, cfg.seed, index + i, epoch, cfg.augment); });
            const fs::path target = single_file ? fs::path(out) : fs::path(out) / fs::path(inputs[i]).filename();
            stage("write", target.string(), [&] { write_png(target, aug); });
            written[i] = target.string();
        });
        for (const auto& w : written)
            os << w << "\n";
        return 0;
    }

    bool selected = false;
};

// ---------------------------------------------------------------- init-weights

struct InitWeightsCmd {
    Common common;
    std::string out_path;

    void attach(CLI::App& app)
    {
        auto* sub = app.add_subcommand("init-weights", "Write a seeded random weight container for the config");
        common.attach(sub);
        sub->add_option("--out", out_path, "Container path")->required();
        sub->callback([this] { selected = true; });
    }

    int run(std::ostream& out) const
    {
        const RunConfig cfg = common.load();
        const WeightStore w = init_random(cfg.model, cfg.seed);
        stage("write", out_path, [&] { save_container(out_path, w); });
        out << out_path << ": " << w.size() << " tensors, " << w.element_count() << " values\n";
        return 0;
    }

    bool selected = false;
};

// ---------------------------------------------------------------- config

struct ConfigCmd {
    Common common;
    std::string file;

    void attach(CLI::App& app)
    {
        auto* sub = app.add_subcommand("config", "Validate a RunConfig and print it with every default filled in");
        sub->add_option("file", file, "RunConfig JSON (omit for the defaults)");
        sub->add_option("--seed", common.seed, "Override the seed");
        sub->callback([this] { selected = true; });
    }

    int run(std::ostream& out) const
    {
        RunConfig cfg = file.empty() ? RunConfig{} : load_run_config(file);
        if (common.seed)
            cfg.seed = *common.seed;
        out << dump_run_config(cfg);
        return 0;
    }

    bool selected = false;
};

}  // namespace

const std::vector<std::string>& pain_class_names()
{
    static const std::vector<std::string> names{"No Pain", "Low Pain", "High Pain"};
    return names;
}

std::size_t worker_count()
{
    if (const char* env = std::getenv("BIOMOE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0)
            return static_cast<std::size_t>(std::min(v, 256L));
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn)
{
    workers = std::max<std::size_t>(1, std::min(workers, n));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex mu;
    std::size_t first_index = n;
    std::exception_ptr first;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load())
                return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < first_index) {
                    first_index = i;
                    first = std::current_exception();
                }
                failed = true;
            }
        }
    };
    if (workers == 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t)
            pool.emplace_back(body);
        for (auto& t : pool)
            t.join();
    }
    if (first)
        std::rethrow_exception(first);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"biomoe: biosignal representations, embedding model and training utilities"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "biomoe 0.1.0");
    RenderCmd render;
    EmbedCmd embed;
    AuditCmd audit;
    EvalCmd eval;
    ScheduleCmd schedule;
    AugmentCmd augment;
    InitWeightsCmd init_weights;
    ConfigCmd config;
    render.attach(app);
    embed.attach(app);
    audit.attach(app);
    eval.attach(app);
    schedule.attach(app);
    augment.attach(app);
    init_weights.attach(app);
    config.attach(app);

    std::vector<std::string> storage{"biomoe"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage)
        argv.push_back(s.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << app.version() << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return static_cast<int>(ErrorKind::usage);
    }

    try {
        if (render.selected)
            return render.run(out);
        if (embed.selected)
            return embed.run(out);
        if (audit.selected)
            return audit.run(out);
        if (eval.selected)
            return eval.run(out);
        if (schedule.selected)
            return schedule.run(out);
        if (augment.selected)
            return augment.run(out);
        if (init_weights.selected)
            return init_weights.run(out);
        if (config.selected)
            return config.run(out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return e.exit_code();
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::usage);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::processing);
    }
    err << app.help();
    return static_cast<int>(ErrorKind::usage);
}

}  // namespace biomoe::cli
