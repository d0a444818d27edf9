#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pedalnet/dsp.hpp"
#include "pedalnet/errors.hpp"
#include "pedalnet/metrics.hpp"
#include "pedalnet/midi.hpp"
#include "pedalnet/network.hpp"
#include "pedalnet/pipeline.hpp"
#include "pedalnet/rng.hpp"
#include "pedalnet/signal.hpp"
#include "pedalnet/svm.hpp"
#include "pedalnet/synth.hpp"
#include "pedalnet/textio.hpp"
#include "pedalnet/train.hpp"
#include "pedalnet/transfer.hpp"
#include "pedalnet/wav.hpp"

namespace fs = std::filesystem;
using namespace pedalnet;

namespace {

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path);
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

// everything before the first underscore, so "chopin_op28.mid" groups by composer
std::string composer_of(const std::string& stem) {
    const auto pos = stem.find('_');
    return pos == std::string::npos ? stem : stem.substr(0, pos);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

struct SynthOpts {
    double decay_pedal = 0.8;
    double decay_nopedal = 3.0;
    double resonance = 0.3;
    double noise = 0.0;

    synth::SynthConfig config(std::uint64_t seed) const {
        synth::SynthConfig cfg;
        cfg.decay_rate_pedal = decay_pedal;
        cfg.decay_rate_no_pedal = decay_nopedal;
        cfg.resonance_gain = resonance;
        cfg.noise_amp = noise;
        cfg.seed = seed;
        return cfg;
    }
};

void add_synth_opts(CLI::App* sub, SynthOpts& o) {
    sub->add_option("--decay-pedal", o.decay_pedal, "pedalled decay rate, 1/s")
        ->capture_default_str();
    sub->add_option("--decay-nopedal", o.decay_nopedal, "damped decay rate, 1/s")
        ->capture_default_str();
    sub->add_option("--resonance", o.resonance, "sympathetic resonance gain")
        ->capture_default_str();
    sub->add_option("--noise", o.noise, "white noise floor amplitude")->capture_default_str();
}

std::pair<int, int> parse_kernel(const std::string& s) {
    const auto pos = s.find('x');
    if (pos == std::string::npos || pos == 0 || pos + 1 >= s.size())
        throw ConfigError("kernel must look like 45x3");
    const long kh = textio::parse_long(s.substr(0, pos));
    const long kw = textio::parse_long(s.substr(pos + 1));
    if (kh < 1 || kw < 1) throw ConfigError("kernel sides must be >= 1");
    return {static_cast<int>(kh), static_cast<int>(kw)};
}

std::vector<synth::LabeledMel> load_pair_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<std::string> pedal_files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.ends_with(".pedal.wav")) pedal_files.push_back(entry.path().string());
    }
    std::sort(pedal_files.begin(), pedal_files.end());
    if (pedal_files.empty()) throw DataError("no *.pedal.wav files in " + dir);

    std::vector<synth::LabeledMel> out;
    out.reserve(pedal_files.size() * 2);
    for (const std::string& p : pedal_files) {
        const std::string twin =
            p.substr(0, p.size() - std::string(".pedal.wav").size()) + ".nopedal.wav";
        if (!fs::exists(twin)) throw DataError("missing no-pedal twin " + twin);
        out.push_back({dsp::melspectrogram(fit_to_duration(wav::read(p), 2.0), {}), 1});
        out.push_back({dsp::melspectrogram(fit_to_duration(wav::read(twin), 2.0), {}), 0});
    }
    return out;
}

// ---- prepare ----

struct PrepareOpts {
    std::vector<std::string> midi_files;
    std::string out_dir;
    int threshold = 64;
    double min_segment = 0.0;
    int cap_per_composer = 1000;
    std::uint64_t seed = 0;
};

void run_prepare(const PrepareOpts& o) {
    ensure_dir(o.out_dir);
    std::vector<midi::MidiPerformance> perfs;
    for (const std::string& file : o.midi_files) {
        const auto bytes = read_bytes(file);
        const midi::SmfFile smf = midi::read_smf(bytes);
        midi::MidiPerformance perf = midi::interpret_smf(smf);
        const std::string stem = stem_of(file);
        perf.source_id = stem;
        perf.composer_id = composer_of(stem);

        const auto segs = midi::pedal_segments(perf.cc64, o.threshold, perf.end_time_s);
        const std::string seg_path = (fs::path(o.out_dir) / (stem + ".segments.csv")).string();
        midi::write_segments_csv(seg_path, segs);
        write_bytes((fs::path(o.out_dir) / (stem + ".nopedal.mid")).string(),
                    midi::write_smf(midi::strip_sustain_smf(smf)));
        std::cout << stem << ": " << perf.notes.size() << " notes, " << segs.size()
                  << " pedal segments\n";
        perfs.push_back(std::move(perf));
    }
    const midi::ExcerptManifest manifest = midi::build_excerpt_manifest(
        perfs, o.cap_per_composer, o.seed, o.threshold, o.min_segment);
    textio::write_text((fs::path(o.out_dir) / "manifest.csv").string(),
                       midi::manifest_to_csv(manifest));
    std::cout << "manifest: " << manifest.entries.size() / 2 << " excerpt pairs\n";
}

// ---- synth ----

struct SynthCmdOpts {
    std::string out_dir;
    int pairs = 0;
    int passages = 0;
    double duration = 10.0;
    std::uint64_t seed = 0;
    SynthOpts synth;
};

void run_synth(const SynthCmdOpts& o) {
    if (o.pairs <= 0 && o.passages <= 0)
        throw ConfigError("give --pairs and/or --passages (> 0)");
    ensure_dir(o.out_dir);
    const synth::SynthConfig cfg = o.synth.config(o.seed);
    char name[64];
    midi::ExcerptManifest manifest;
    for (int i = 0; i < o.pairs; ++i) {
        const synth::RenderedPair pair = synth::render_pair(i, cfg);
        std::snprintf(name, sizeof name, "pair%05d", i);
        wav::write((fs::path(o.out_dir) / (std::string(name) + ".pedal.wav")).string(),
                   pair.pedal);
        wav::write((fs::path(o.out_dir) / (std::string(name) + ".nopedal.wav")).string(),
                   pair.no_pedal);
        manifest.entries.push_back(
            {name, "toy", pair.segment.onset_s, pair.segment.offset_s, "pedal"});
        manifest.entries.push_back(
            {name, "toy", pair.segment.onset_s, pair.segment.offset_s, "no-pedal"});
    }
    if (o.pairs > 0) {
        textio::write_text((fs::path(o.out_dir) / "manifest.csv").string(),
                           midi::manifest_to_csv(manifest));
        std::cout << o.pairs << " excerpt pairs -> " << o.out_dir << '\n';
    }
    for (int i = 0; i < o.passages; ++i) {
        std::snprintf(name, sizeof name, "passage%02d", i);
        const synth::ToyPassage p =
            synth::generate_passage(name, o.duration, cfg, static_cast<std::uint64_t>(i));
        wav::write((fs::path(o.out_dir) / (p.id + ".wav")).string(), p.audio);
        midi::write_segments_csv((fs::path(o.out_dir) / (p.id + ".segments.csv")).string(),
                                 p.truth);
    }
    if (o.passages > 0) std::cout << o.passages << " passages -> " << o.out_dir << '\n';
}

// ---- train ----

struct TrainOpts {
    std::string out;
    std::string arch = "multi";
    std::string kernel;
    int channels = 0;
    int layers = 0;
    int synth_pairs = 0;
    std::string data_dir;
    std::uint64_t seed = 0;
    int epochs = 200;
    int patience = 10;
    int batch_size = 128;
    double lr = 1e-3;
    double val_fraction = 0.2;
    std::string history;
    bool head_only = false;
    std::string base;
    SynthOpts synth;
};

nn::NetworkConfig arch_config(const TrainOpts& o) {
    const int channels = o.channels > 0 ? o.channels : 21;
    const int layers = o.layers > 0 ? o.layers : 4;
    if (o.arch == "multi") {
        if (!o.kernel.empty())
            throw ConfigError("--kernel applies to single-branch archs, not multi");
        if (channels % 3 != 0) throw ConfigError("multi needs --channels divisible by 3");
        nn::NetworkConfig cfg = nn::NetworkConfig::multi();
        const int per_branch = channels / 3;
        for (nn::ConvSpec& spec : cfg.first_layer) spec.channels = per_branch;
        cfg.n_layers = layers;
        return cfg;
    }
    int kh = 3;
    int kw = 3;
    if (o.arch == "frequency") kh = 45;
    else if (o.arch == "time") kw = 10;
    else if (o.arch != "baseline") throw ConfigError("unknown arch " + o.arch);
    if (!o.kernel.empty()) std::tie(kh, kw) = parse_kernel(o.kernel);
    return nn::NetworkConfig::single(channels, kh, kw, layers);
}

void run_train(const TrainOpts& o) {
    if ((o.synth_pairs > 0) == !o.data_dir.empty())
        throw ConfigError("give exactly one of --synth-pairs or --data-dir");
    if (o.head_only && o.base.empty()) throw ConfigError("--head-only needs --base MODEL");

    std::vector<synth::LabeledMel> dataset;
    if (o.synth_pairs > 0) {
        std::cout << "synthesizing " << o.synth_pairs << " excerpt pairs...\n";
        dataset = synth::generate_paired_dataset(o.synth_pairs, o.synth.config(o.seed));
    } else {
        dataset = load_pair_dir(o.data_dir);
    }
    std::cout << dataset.size() << " excerpts loaded\n";

    nn::TrainConfig tcfg;
    tcfg.max_epochs = o.epochs;
    tcfg.patience = o.patience;
    tcfg.batch_size = o.batch_size;
    tcfg.lr = o.lr;
    tcfg.val_fraction = o.val_fraction;
    tcfg.seed = o.seed;

    nn::TrainResult result;
    if (o.head_only) {
        const nn::Network<float> base = nn::load_network(o.base);
        result = nn::retrain_head(base, tcfg, dataset);
    } else {
        result = nn::train(arch_config(o), tcfg, dataset);
    }
    nn::save_network(o.out, result.network);
    if (!o.history.empty()) textio::write_text(o.history, nn::history_csv(result.history));
    std::cout << "best epoch " << result.best_epoch << ": val_acc "
              << textio::fmt_double(result.best_val_acc) << ", val_auc "
              << textio::fmt_double(result.best_val_auc) << '\n';
    std::cout << "model -> " << o.out << '\n';
}

// ---- features ----

struct FeaturesOpts {
    std::string model;
    std::string audio;
    std::string out;
    std::string truth;
    std::string id;
    double window = 0.3;
    double hop = 0.1;
};

void run_features(const FeaturesOpts& o) {
    const nn::Network<float> net = nn::load_network(o.model);
    const Signal signal = wav::read(o.audio);
    const std::string id = o.id.empty() ? stem_of(o.audio) : o.id;
    const transfer::FrameFeatures ff =
        transfer::extract_frame_features(net, signal, id, o.window, o.hop);
    if (o.truth.empty()) {
        textio::write_text(o.out, transfer::features_csv(ff));
    } else {
        const auto labels =
            metrics::frame_ground_truth(midi::read_segments_csv(o.truth), ff.frame_times);
        textio::write_text(o.out, transfer::features_csv(ff, &labels));
    }
    std::cout << ff.frame_times.size() << " frames x " << ff.features.front().size()
              << " features -> " << o.out << '\n';
}

// ---- svm-train ----

struct SvmTrainOpts {
    std::vector<std::string> features;
    std::string out;
    double gamma = 0.0;
    double C = 0.0;
    double inner_val = 0.2;
    std::uint64_t seed = 0;
    std::string grid_out;
};

void run_svm_train(const SvmTrainOpts& o) {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (const std::string& file : o.features) {
        const transfer::ParsedFeatures parsed =
            transfer::parse_features_csv(textio::read_text(file));
        if (parsed.labels.empty())
            throw DataError(file + " has no label column; rerun features with --truth");
        for (std::size_t i = 0; i < parsed.features.size(); ++i) {
            x.push_back(parsed.features[i]);
            y.push_back(parsed.labels[i] == 1 ? 1 : -1);
        }
    }
    double gamma = o.gamma;
    double C = o.C;
    if ((gamma > 0.0) != (C > 0.0))
        throw ConfigError("give both --gamma and --C, or neither for a grid search");
    if (gamma <= 0.0) {
        const svm::GridResult grid = svm::grid_search(
            x, y, svm::GridSpec::standard(x.front().size()), o.inner_val, o.seed);
        if (!o.grid_out.empty()) textio::write_text(o.grid_out, svm::grid_csv(grid));
        gamma = grid.best_gamma;
        C = grid.best_C;
        std::cout << "grid best: gamma " << textio::fmt_double(gamma) << ", C "
                  << textio::fmt_double(C) << " (micro-F "
                  << textio::fmt_double(grid.best_score) << ")\n";
    }
    svm::TrainInfo info;
    const svm::SvmModel model = svm::train_svm(x, y, C, gamma, &info);
    svm::save_svm(o.out, model);
    std::cout << x.size() << " frames, " << info.n_support << " support vectors, objective "
              << textio::fmt_double(info.dual_objective) << '\n';
    std::cout << "model -> " << o.out << '\n';
}

// ---- detect ----

struct DetectOpts {
    std::string model;
    std::string audio;
    std::string method = "svm";
    std::string svm_path;
    std::string out;
    std::string svg;
    std::string truth;
    std::string id;
    int median = 0;
    double window = 0.3;
    double hop = 0.1;
};

void run_detect(const DetectOpts& o) {
    const pipeline::Method method = pipeline::method_from_string(o.method);
    const nn::Network<float> net = nn::load_network(o.model);
    svm::SvmModel model;
    const svm::SvmModel* model_ptr = nullptr;
    if (method == pipeline::Method::svm_transfer) {
        if (o.svm_path.empty()) throw ModelError("method svm needs --svm MODEL");
        model = svm::load_svm(o.svm_path);
        model_ptr = &model;
    }
    const Signal signal = wav::read(o.audio);
    const std::string id = o.id.empty() ? stem_of(o.audio) : o.id;
    pipeline::DetectOptions dopt;
    dopt.window_s = o.window;
    dopt.hop_s = o.hop;
    dopt.median_filter = o.median;
    const pipeline::DetectionTimeline tl =
        pipeline::detect(signal, net, model_ptr, method, id, dopt);

    std::vector<int> truth;
    const std::vector<int>* truth_ptr = nullptr;
    if (!o.truth.empty()) {
        truth = metrics::frame_ground_truth(midi::read_segments_csv(o.truth), tl.times);
        truth_ptr = &truth;
    }
    textio::write_text(o.out, pipeline::timeline_csv(tl, truth_ptr));
    if (!o.svg.empty()) textio::write_text(o.svg, pipeline::timeline_svg(tl, truth_ptr));

    long on = 0;
    for (int l : tl.labels) on += l;
    std::cout << tl.labels.size() << " frames, " << on << " on -> " << o.out << '\n';
    if (truth_ptr != nullptr) {
        const metrics::Prf p = metrics::prf(tl.labels, truth);
        std::cout << "P1 " << textio::fmt_fixed(p.precision, 4) << ", R1 "
                  << textio::fmt_fixed(p.recall, 4) << ", F1 " << textio::fmt_fixed(p.f1, 4)
                  << (p.degenerate ? " (degenerate)" : "") << '\n';
    }
}

// ---- cv ----

struct CvOpts {
    std::string corpus_dir;
    std::string model;
    std::string out;
    std::uint64_t seed = 0;
    double inner_val = 0.2;
    int epochs = 200;
    int patience = 10;
    int batch_size = 128;
    double lr = 1e-3;
    double val_fraction = 0.2;
    int median = 0;
    double window = 0.3;
    double hop = 0.1;
};

// Passages are keyed by their truth files, so excerpt pairs and other
// auxiliary audio can share the directory. A truth file without its
// recording is still an error.
std::vector<pipeline::PassageData> load_corpus(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    const std::string suffix = ".segments.csv";
    std::vector<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw DataError("no *.segments.csv files in " + dir);

    std::vector<pipeline::PassageData> passages;
    for (const std::string& id : ids) {
        pipeline::PassageData p;
        p.id = id;
        const std::string wav_path = (fs::path(dir) / (id + ".wav")).string();
        if (!fs::exists(wav_path)) throw DataError("missing " + wav_path);
        p.audio = wav::read(wav_path);
        p.truth = midi::read_segments_csv((fs::path(dir) / (id + suffix)).string());
        passages.push_back(std::move(p));
    }
    return passages;
}

void run_cv(const CvOpts& o) {
    const nn::Network<float> net = nn::load_network(o.model);
    const std::vector<pipeline::PassageData> passages = load_corpus(o.corpus_dir);
    std::cout << passages.size() << " passages\n";

    pipeline::CvOptions opt;
    opt.seed = o.seed;
    opt.inner_val_fraction = o.inner_val;
    opt.head.max_epochs = o.epochs;
    opt.head.patience = o.patience;
    opt.head.batch_size = o.batch_size;
    opt.head.lr = o.lr;
    opt.head.val_fraction = o.val_fraction;
    opt.detect.window_s = o.window;
    opt.detect.hop_s = o.hop;
    opt.detect.median_filter = o.median;

    const pipeline::CvReport report = pipeline::logo_cv(passages, net, opt);
    textio::write_text(o.out, pipeline::report_csv(report));
    for (const pipeline::MethodReport* m : {&report.direct, &report.finetune, &report.svm})
        std::cout << pipeline::method_name(m->method) << ": avg F1 "
                  << textio::fmt_fixed(m->average.f1, 4) << ", micro-F "
                  << textio::fmt_fixed(m->micro_f1, 4) << '\n';
    std::cout << "report -> " << o.out << '\n';
}

// ---- report ----

struct ReportOpts {
    std::string timeline;
    std::string svg;
    std::string metrics_out;
};

void run_report(const ReportOpts& o) {
    std::vector<int> truth;
    pipeline::DetectionTimeline tl;
    {
        const std::string text = textio::read_text(o.timeline);
        tl = pipeline::parse_timeline_csv(text, &truth);
    }
    const bool has_truth = truth.size() == tl.labels.size() && !truth.empty();
    const std::vector<int>* truth_ptr = has_truth ? &truth : nullptr;
    if (!o.svg.empty()) {
        textio::write_text(o.svg, pipeline::timeline_svg(tl, truth_ptr));
        std::cout << "svg -> " << o.svg << '\n';
    }
    if (!has_truth) {
        if (!o.metrics_out.empty())
            throw DataError("timeline has no truth column; cannot compute metrics");
        return;
    }
    const metrics::Prf p = metrics::prf(tl.labels, truth);
    std::string lines = "precision=" + textio::fmt_double(p.precision) + "\nrecall=" +
                        textio::fmt_double(p.recall) + "\nf1=" + textio::fmt_double(p.f1) + "\n";
    bool auc_ok = true;
    double auc = 0.0;
    try {
        auc = metrics::auc_roc(tl.scores, truth);
    } catch (const DataError&) {
        auc_ok = false;  // single-class truth
    }
    if (auc_ok) lines += "auc=" + textio::fmt_double(auc) + "\n";
    if (p.degenerate) lines += "degenerate=1\n";
    if (!o.metrics_out.empty()) textio::write_text(o.metrics_out, lines);
    std::cout << lines;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frame-wise piano sustain-pedal detection"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "pedalnet 1.0.0");
    app.set_config("--config", "",
                   "key=value option file; subcommand options go in a [subcommand] "
                   "section or use dotted keys like synth.pairs");

    auto prepare = std::make_shared<PrepareOpts>();
    {
        CLI::App* sub = app.add_subcommand(
            "prepare", "extract pedal segments and stripped MIDI, build the excerpt manifest");
        sub->add_option("midi", prepare->midi_files, "input .mid files")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out-dir", prepare->out_dir, "output directory")->required();
        sub->add_option("--threshold", prepare->threshold, "CC64 on threshold")
            ->capture_default_str();
        sub->add_option("--min-segment", prepare->min_segment, "minimum segment length, s")
            ->capture_default_str();
        sub->add_option("--cap-per-composer", prepare->cap_per_composer,
                        "subsample composers above this many pairs")
            ->capture_default_str();
        sub->add_option("--seed", prepare->seed, "subsampling seed")->capture_default_str();
        sub->callback([prepare] { run_prepare(*prepare); });
    }

    auto synth_opts = std::make_shared<SynthCmdOpts>();
    {
        CLI::App* sub = app.add_subcommand("synth", "render a toy corpus with the additive synth");
        sub->add_option("--out-dir", synth_opts->out_dir, "output directory")->required();
        sub->add_option("--pairs", synth_opts->pairs, "number of pedal/no-pedal excerpt pairs")
            ->capture_default_str();
        sub->add_option("--passages", synth_opts->passages, "number of evaluation passages")
            ->capture_default_str();
        sub->add_option("--duration", synth_opts->duration, "passage length, s")
            ->capture_default_str();
        sub->add_option("--seed", synth_opts->seed, "corpus seed")->capture_default_str();
        add_synth_opts(sub, synth_opts->synth);
        sub->callback([synth_opts] { run_synth(*synth_opts); });
    }

    auto train = std::make_shared<TrainOpts>();
    {
        CLI::App* sub = app.add_subcommand("train", "train the source-task network");
        sub->add_option("--out", train->out, "checkpoint output path")->required();
        sub->add_option("--arch", train->arch, "architecture")
            ->check(CLI::IsMember({"baseline", "frequency", "time", "multi"}))
            ->capture_default_str();
        sub->add_option("--kernel", train->kernel, "first-layer kernel MxN (single-branch archs)");
        sub->add_option("--channels", train->channels, "channels per block (default 21)");
        sub->add_option("--layers", train->layers, "conv blocks (default 4)");
        sub->add_option("--synth-pairs", train->synth_pairs, "synthesize this many pairs");
        sub->add_option("--data-dir", train->data_dir, "directory of *.pedal.wav/*.nopedal.wav");
        sub->add_option("--seed", train->seed, "seed for data, init and shuffling")
            ->capture_default_str();
        sub->add_option("--epochs", train->epochs, "epoch cap")->capture_default_str();
        sub->add_option("--patience", train->patience, "early-stopping patience")
            ->capture_default_str();
        sub->add_option("--batch-size", train->batch_size, "batch size")->capture_default_str();
        sub->add_option("--lr", train->lr, "Adam learning rate")->capture_default_str();
        sub->add_option("--val-fraction", train->val_fraction, "validation split fraction")
            ->capture_default_str();
        sub->add_option("--history", train->history, "write per-epoch stats CSV here");
        sub->add_flag("--head-only", train->head_only, "retrain only the dense head");
        sub->add_option("--base", train->base, "frozen base checkpoint for --head-only");
        add_synth_opts(sub, train->synth);
        sub->callback([train] { run_train(*train); });
    }

    auto features = std::make_shared<FeaturesOpts>();
    {
        CLI::App* sub = app.add_subcommand("features", "dump frame-wise transfer features");
        sub->add_option("--model", features->model, "network checkpoint")->required();
        sub->add_option("--audio", features->audio, "input WAV")->required();
        sub->add_option("--out", features->out, "feature CSV output")->required();
        sub->add_option("--truth", features->truth, "segments CSV; adds a label column");
        sub->add_option("--id", features->id, "recording id (default: audio stem)");
        sub->add_option("--window", features->window, "analysis window, s")
            ->capture_default_str();
        sub->add_option("--hop", features->hop, "hop between frames, s")->capture_default_str();
        sub->callback([features] { run_features(*features); });
    }

    auto svm_train = std::make_shared<SvmTrainOpts>();
    {
        CLI::App* sub = app.add_subcommand("svm-train", "fit the RBF-SVM on labeled features");
        sub->add_option("--features", svm_train->features, "labeled feature CSVs")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", svm_train->out, "SVM model output path")->required();
        sub->add_option("--gamma", svm_train->gamma, "RBF bandwidth (0 = grid search)")
            ->capture_default_str();
        sub->add_option("--C", svm_train->C, "penalty (0 = grid search)")->capture_default_str();
        sub->add_option("--inner-val", svm_train->inner_val, "grid validation fraction")
            ->capture_default_str();
        sub->add_option("--seed", svm_train->seed, "grid split seed")->capture_default_str();
        sub->add_option("--grid-out", svm_train->grid_out, "write the grid table CSV here");
        sub->callback([svm_train] { run_svm_train(*svm_train); });
    }

    auto detect = std::make_shared<DetectOpts>();
    {
        CLI::App* sub = app.add_subcommand("detect", "detect pedal frames in a recording");
        sub->add_option("--model", detect->model, "network checkpoint")->required();
        sub->add_option("--audio", detect->audio, "input WAV")->required();
        sub->add_option("--method", detect->method, "direct, finetune or svm")
            ->check(CLI::IsMember({"direct", "finetune", "svm"}))
            ->capture_default_str();
        sub->add_option("--svm", detect->svm_path, "SVM model (required for --method svm)");
        sub->add_option("--out", detect->out, "timeline CSV output")->required();
        sub->add_option("--svg", detect->svg, "also write a strip chart here");
        sub->add_option("--truth", detect->truth, "segments CSV; adds truth column and metrics");
        sub->add_option("--id", detect->id, "recording id (default: audio stem)");
        sub->add_option("--median", detect->median, "odd median-filter length (0 = off)")
            ->capture_default_str();
        sub->add_option("--window", detect->window, "analysis window, s")->capture_default_str();
        sub->add_option("--hop", detect->hop, "hop between frames, s")->capture_default_str();
        sub->callback([detect] { run_detect(*detect); });
    }

    auto cv = std::make_shared<CvOpts>();
    {
        CLI::App* sub = app.add_subcommand(
            "cv", "leave-one-passage-out cross-validation over a corpus directory");
        sub->add_option("--corpus-dir", cv->corpus_dir,
                        "directory of <id>.wav + <id>.segments.csv")
            ->required();
        sub->add_option("--model", cv->model, "network checkpoint")->required();
        sub->add_option("--out", cv->out, "report CSV output")->required();
        sub->add_option("--seed", cv->seed, "fold seed")->capture_default_str();
        sub->add_option("--inner-val", cv->inner_val, "grid validation fraction")
            ->capture_default_str();
        sub->add_option("--epochs", cv->epochs, "head retrain epoch cap")->capture_default_str();
        sub->add_option("--patience", cv->patience, "head retrain patience")
            ->capture_default_str();
        sub->add_option("--batch-size", cv->batch_size, "head retrain batch size")
            ->capture_default_str();
        sub->add_option("--lr", cv->lr, "head retrain learning rate")->capture_default_str();
        sub->add_option("--val-fraction", cv->val_fraction, "head retrain validation fraction")
            ->capture_default_str();
        sub->add_option("--median", cv->median, "odd median-filter length (0 = off)")
            ->capture_default_str();
        sub->add_option("--window", cv->window, "analysis window, s")->capture_default_str();
        sub->add_option("--hop", cv->hop, "hop between frames, s")->capture_default_str();
        sub->callback([cv] { run_cv(*cv); });
    }

    auto report = std::make_shared<ReportOpts>();
    {
        CLI::App* sub = app.add_subcommand("report", "metrics and SVG from a timeline CSV");
        sub->add_option("--timeline", report->timeline, "timeline CSV from detect")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--svg", report->svg, "strip chart output path");
        sub->add_option("--metrics-out", report->metrics_out, "write key=value metrics here");
        sub->callback([report] { run_report(*report); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << '\n';
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
