#include "rfm/toydata.hpp"

#include <cmath>
#include <set>

#include "json.hpp"
#include "rfm/binio.hpp"
#include "rfm/errors.hpp"

namespace rfm {

namespace {

constexpr char kMagic[5] = "RFDS";
constexpr uint32_t kVersion = 1;

double norm_of(const Tensor& t) {
    double s = 0.0;
    for (long i = 0; i < t.size(); ++i) s += static_cast<double>(t.data()[i]) * t.data()[i];
    return std::sqrt(s);
}

// |cos| of the angle between two flattened tensors
double abs_cosine(const Tensor& a, const Tensor& b) {
    double dot = 0.0;
    for (long i = 0; i < a.size(); ++i)
        dot += static_cast<double>(a.data()[i]) * b.data()[i];
    const double na = norm_of(a), nb = norm_of(b);
    if (na == 0.0 || nb == 0.0) return 1.0;  // a zero template is degenerate
    return std::abs(dot) / (na * nb);
}

}  // namespace

Tensor default_gauss_means(int num_classes, int dim) {
    if (num_classes < 1 || dim < 1)
        throw ConfigError("gauss task: num_classes and dim must be positive");
    Tensor means({num_classes, dim});
    for (int k = 0; k < num_classes; ++k) {
        if (dim == 1) {
            means.data()[k] = num_classes == 1
                                  ? 0.0f
                                  : static_cast<float>(-1.0 + 2.0 * k / (num_classes - 1));
        } else {
            const double angle = 2.0 * M_PI * k / num_classes;
            means.data()[k * dim + 0] = static_cast<float>(std::cos(angle));
            means.data()[k * dim + 1] = static_cast<float>(std::sin(angle));
        }
    }
    return means;
}

void GaussTaskSpec::validate() const {
    if (num_classes < 1) throw ConfigError("gauss task: num_classes must be >= 1");
    if (dim < 1) throw ConfigError("gauss task: dim must be >= 1");
    if (sigma < 0.0) throw ConfigError("gauss task: sigma must be >= 0");
    if (samples_per_class < 1) throw ConfigError("gauss task: samples_per_class must be >= 1");
    if (means.size() == 0) throw ConfigError("gauss task: means are unset");
    if (means.rank() != 2 || means.dim(0) != num_classes || means.dim(1) != dim)
        throw ConfigError("gauss task: means must be [" + std::to_string(num_classes) + ", " +
                          std::to_string(dim) + "], got " + shape_str(means.shape()));
    for (int a = 0; a < num_classes; ++a)
        for (int b = a + 1; b < num_classes; ++b) {
            double d = 0.0;
            for (int j = 0; j < dim; ++j) {
                const double diff = static_cast<double>(means.data()[a * dim + j]) -
                                    means.data()[b * dim + j];
                d += diff * diff;
            }
            if (d == 0.0)
                throw ConfigError("gauss task: means of classes " + std::to_string(a) + " and " +
                                  std::to_string(b) + " coincide");
        }
}

std::vector<Tensor> default_event_templates(int vocab, int ratio, int dim, uint64_t seed) {
    if (vocab < 1 || ratio < 1 || dim < 1)
        throw ConfigError("event task: vocab, ratio and dim must be positive");
    Rng root(seed);
    std::vector<Tensor> out;
    for (int k = 0; k < vocab; ++k) {
        for (uint64_t attempt = 0;; ++attempt) {
            if (attempt > 64)
                throw NumericError("event task: could not draw a non-collinear template bank");
            Rng rng = root.fork(Stream::DataGen, static_cast<uint64_t>(k), attempt);
            Tensor t({ratio, dim});
            rng.fill_normal(t.data(), t.size());
            const double n = norm_of(t);
            if (n < 1e-6) continue;
            for (long i = 0; i < t.size(); ++i)
                t.data()[i] = static_cast<float>(t.data()[i] / n);
            bool ok = true;
            for (const Tensor& prev : out)
                if (abs_cosine(prev, t) > 0.95) ok = false;
            if (!ok) continue;
            out.push_back(t);
            break;
        }
    }
    return out;
}

void EventTaskSpec::validate() const {
    if (cond_len < 1) throw ConfigError("event task: cond_len must be >= 1");
    if (ratio < 1) throw ConfigError("event task: ratio must be >= 1");
    if (vocab < 1) throw ConfigError("event task: vocab must be >= 1");
    if (dim < 1) throw ConfigError("event task: dim must be >= 1");
    if (jitter < 0.0) throw ConfigError("event task: jitter must be >= 0");
    if (density < 0.0 || density > 1.0)
        throw ConfigError("event task: density must lie in [0, 1], got " +
                          std::to_string(density));
    if (num_items < 1) throw ConfigError("event task: num_items must be >= 1");
    if (templates.size() != static_cast<size_t>(vocab))
        throw ConfigError("event task: expected " + std::to_string(vocab) + " templates, got " +
                          std::to_string(templates.size()));
    for (size_t k = 0; k < templates.size(); ++k) {
        const Tensor& t = templates[k];
        if (t.rank() != 2 || t.dim(0) != ratio || t.dim(1) != dim)
            throw ConfigError("event task: template " + std::to_string(k) + " must be [" +
                              std::to_string(ratio) + ", " + std::to_string(dim) + "], got " +
                              shape_str(t.shape()));
    }
    for (size_t a = 0; a < templates.size(); ++a)
        for (size_t b = a + 1; b < templates.size(); ++b)
            if (abs_cosine(templates[a], templates[b]) > 0.999)
                throw ConfigError("event task: templates " + std::to_string(a) + " and " +
                                  std::to_string(b) + " are collinear");
}

void TaskSpec::validate() const {
    if (kind == Kind::Gauss)
        gauss.validate();
    else
        events.validate();
}

int TaskSpec::latent_dim() const { return kind == Kind::Gauss ? gauss.dim : events.dim; }
int TaskSpec::cond_dim() const {
    return kind == Kind::Gauss ? gauss.num_classes : events.cond_channels();
}
int TaskSpec::latent_len() const { return kind == Kind::Gauss ? 1 : events.latent_len(); }
int TaskSpec::cond_len() const { return kind == Kind::Gauss ? 1 : events.cond_len; }

// ------------------------------------------------------------------- json --

namespace {

nlohmann::json parse_object(const std::string& text, const char* what) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(what) + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
    return j;
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const char* what) {
    for (const auto& [key, value] : j.items())
        if (!known.count(key))
            throw ConfigError(std::string(what) + ": unknown key \"" + key + "\"");
}

Tensor means_from_json(const nlohmann::json& rows) {
    if (!rows.is_array() || rows.empty())
        throw ConfigError("gauss task: means must be a non-empty array of rows");
    const int k = static_cast<int>(rows.size());
    const int d = rows[0].is_array() ? static_cast<int>(rows[0].size()) : -1;
    if (d < 1) throw ConfigError("gauss task: each means row must be a non-empty array");
    Tensor t({k, d});
    for (int i = 0; i < k; ++i) {
        if (!rows[static_cast<size_t>(i)].is_array() ||
            static_cast<int>(rows[static_cast<size_t>(i)].size()) != d)
            throw ConfigError("gauss task: means rows have inconsistent lengths");
        for (int j = 0; j < d; ++j)
            t.data()[i * d + j] = rows[static_cast<size_t>(i)][static_cast<size_t>(j)].get<float>();
    }
    return t;
}

std::vector<Tensor> templates_from_json(const nlohmann::json& bank, int ratio, int dim) {
    if (!bank.is_array()) throw ConfigError("event task: templates must be an array");
    std::vector<Tensor> out;
    for (const auto& entry : bank) {
        if (!entry.is_array() || static_cast<int>(entry.size()) != ratio)
            throw ConfigError("event task: each template must have one row per latent frame");
        Tensor t({ratio, dim});
        for (int i = 0; i < ratio; ++i) {
            const auto& row = entry[static_cast<size_t>(i)];
            if (!row.is_array() || static_cast<int>(row.size()) != dim)
                throw ConfigError("event task: template rows must have \"dim\" entries");
            for (int j = 0; j < dim; ++j)
                t.data()[i * dim + j] = row[static_cast<size_t>(j)].get<float>();
        }
        out.push_back(t);
    }
    return out;
}

}  // namespace

TaskSpec task_spec_from_json(const std::string& text) {
    nlohmann::json j = parse_object(text, "task spec");
    if (!j.contains("kind")) throw ConfigError("task spec: missing \"kind\"");
    std::string kind;
    try {
        kind = j.at("kind").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("task spec: bad \"kind\": ") + e.what());
    }

    TaskSpec spec;
    try {
        if (kind == "gauss") {
            spec.kind = TaskSpec::Kind::Gauss;
            reject_unknown(j,
                           {"kind", "num_classes", "dim", "means", "sigma", "samples_per_class",
                            "seed"},
                           "gauss task");
            auto& g = spec.gauss;
            if (j.contains("num_classes")) g.num_classes = j.at("num_classes").get<int>();
            if (j.contains("dim")) g.dim = j.at("dim").get<int>();
            if (j.contains("sigma")) g.sigma = j.at("sigma").get<double>();
            if (j.contains("samples_per_class"))
                g.samples_per_class = j.at("samples_per_class").get<int>();
            if (j.contains("seed")) g.seed = j.at("seed").get<uint64_t>();
            g.means = j.contains("means") ? means_from_json(j.at("means"))
                                          : default_gauss_means(g.num_classes, g.dim);
        } else if (kind == "events") {
            spec.kind = TaskSpec::Kind::Events;
            reject_unknown(j,
                           {"kind", "cond_len", "ratio", "vocab", "dim", "templates", "jitter",
                            "density", "num_items", "seed"},
                           "event task");
            auto& e = spec.events;
            if (j.contains("cond_len")) e.cond_len = j.at("cond_len").get<int>();
            if (j.contains("ratio")) e.ratio = j.at("ratio").get<int>();
            if (j.contains("vocab")) e.vocab = j.at("vocab").get<int>();
            if (j.contains("dim")) e.dim = j.at("dim").get<int>();
            if (j.contains("jitter")) e.jitter = j.at("jitter").get<double>();
            if (j.contains("density")) e.density = j.at("density").get<double>();
            if (j.contains("num_items")) e.num_items = j.at("num_items").get<int>();
            if (j.contains("seed")) e.seed = j.at("seed").get<uint64_t>();
            e.templates = j.contains("templates")
                              ? templates_from_json(j.at("templates"), e.ratio, e.dim)
                              : default_event_templates(e.vocab, e.ratio, e.dim, e.seed);
        } else {
            throw ConfigError("task spec: kind must be \"gauss\" or \"events\", got \"" + kind +
                              "\"");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("task spec: bad field type: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::string task_spec_to_json(const TaskSpec& spec) {
    nlohmann::json j;
    if (spec.kind == TaskSpec::Kind::Gauss) {
        const auto& g = spec.gauss;
        j["kind"] = "gauss";
        j["num_classes"] = g.num_classes;
        j["dim"] = g.dim;
        j["sigma"] = g.sigma;
        j["samples_per_class"] = g.samples_per_class;
        j["seed"] = g.seed;
        nlohmann::json rows = nlohmann::json::array();
        for (int k = 0; k < g.num_classes; ++k) {
            nlohmann::json row = nlohmann::json::array();
            for (int d = 0; d < g.dim; ++d) row.push_back(g.means.data()[k * g.dim + d]);
            rows.push_back(row);
        }
        j["means"] = rows;
    } else {
        const auto& e = spec.events;
        j["kind"] = "events";
        j["cond_len"] = e.cond_len;
        j["ratio"] = e.ratio;
        j["vocab"] = e.vocab;
        j["dim"] = e.dim;
        j["jitter"] = e.jitter;
        j["density"] = e.density;
        j["num_items"] = e.num_items;
        j["seed"] = e.seed;
        nlohmann::json bank = nlohmann::json::array();
        for (const Tensor& t : e.templates) {
            nlohmann::json tpl = nlohmann::json::array();
            for (int i = 0; i < e.ratio; ++i) {
                nlohmann::json row = nlohmann::json::array();
                for (int d = 0; d < e.dim; ++d) row.push_back(t.data()[i * e.dim + d]);
                tpl.push_back(row);
            }
            bank.push_back(tpl);
        }
        j["templates"] = bank;
    }
    return j.dump(2);
}

// -------------------------------------------------------------- generation --

std::vector<TrainItem> gen_gauss(const GaussTaskSpec& spec) {
    spec.validate();
    Rng root(spec.seed);
    std::vector<TrainItem> data;
    const long total = static_cast<long>(spec.num_classes) * spec.samples_per_class;
    data.reserve(static_cast<size_t>(total));
    for (long i = 0; i < total; ++i) {
        const int k = static_cast<int>(i / spec.samples_per_class);
        Rng rng = root.fork(Stream::DataGen, static_cast<uint64_t>(i));
        Tensor x({1, spec.dim});
        rng.fill_normal(x.data(), spec.dim);
        for (int d = 0; d < spec.dim; ++d)
            x.data()[d] = spec.means.data()[k * spec.dim + d] +
                          static_cast<float>(spec.sigma) * x.data()[d];
        Tensor c({1, spec.num_classes});
        c.data()[k] = 1.0f;
        data.push_back({LatentSeq{x}, ConditionSeq{c, false}});
    }
    return data;
}

std::vector<TrainItem> gen_events(const EventTaskSpec& spec) {
    spec.validate();
    Rng root(spec.seed);
    const int dc = spec.cond_channels();
    const int lx = spec.latent_len();
    std::vector<TrainItem> data;
    data.reserve(static_cast<size_t>(spec.num_items));
    for (int i = 0; i < spec.num_items; ++i) {
        Rng rng = root.fork(Stream::DataGen, static_cast<uint64_t>(i));
        Tensor c({spec.cond_len, dc});
        // Each event id appears at most once per sequence so a matched filter
        // sliding one template over the sequence has a unique true onset.
        // Active frames beyond the vocabulary size are dropped uniformly.
        std::vector<int> active;
        for (int j = 0; j < spec.cond_len; ++j)
            if (rng.bernoulli(spec.density)) active.push_back(j);
        while (static_cast<int>(active.size()) > spec.vocab)
            active.erase(active.begin() +
                         static_cast<long>(rng.next_below(active.size())));
        std::vector<int> ids(static_cast<size_t>(spec.vocab));
        for (int k = 0; k < spec.vocab; ++k) ids[static_cast<size_t>(k)] = k;
        std::vector<int> event_at(static_cast<size_t>(spec.cond_len), -1);
        for (size_t a = 0; a < active.size(); ++a) {
            const size_t pick = a + rng.next_below(ids.size() - a);
            std::swap(ids[a], ids[pick]);
            event_at[static_cast<size_t>(active[a])] = ids[a];
        }
        for (int j = 0; j < spec.cond_len; ++j) {
            const int id = event_at[static_cast<size_t>(j)];
            c.data()[j * dc + (id >= 0 ? id : spec.vocab)] = 1.0f;
        }
        Tensor x({lx, spec.dim});
        rng.fill_normal(x.data(), x.size());
        const float jit = static_cast<float>(spec.jitter);
        for (long e = 0; e < x.size(); ++e) x.data()[e] *= jit;
        for (int j = 0; j < spec.cond_len; ++j) {
            const int id = event_at[static_cast<size_t>(j)];
            if (id < 0) continue;
            const Tensor& tpl = spec.templates[static_cast<size_t>(id)];
            for (long e = 0; e < tpl.size(); ++e)
                x.data()[static_cast<long>(j) * spec.ratio * spec.dim + e] += tpl.data()[e];
        }
        data.push_back({LatentSeq{x}, ConditionSeq{c, false}});
    }
    return data;
}

std::vector<TrainItem> generate(const TaskSpec& spec) {
    spec.validate();
    return spec.kind == TaskSpec::Kind::Gauss ? gen_gauss(spec.gauss) : gen_events(spec.events);
}

// --------------------------------------------------------------------- io --

namespace {

void put_tensor(std::ofstream& out, const std::string& name, const Tensor& t) {
    binio::put_u32(out, static_cast<uint32_t>(name.size()));
    binio::put_bytes(out, name.data(), name.size());
    binio::put_u32(out, static_cast<uint32_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) binio::put_u32(out, static_cast<uint32_t>(t.dim(d)));
    for (long i = 0; i < t.size(); ++i) binio::put_f32(out, t.data()[i]);
}

Tensor get_tensor(std::ifstream& in, const std::string& path, const char* expect_name) {
    const uint32_t name_len = binio::get_u32(in, path + ": tensor name length");
    if (name_len > 64) throw FormatError(path + ": implausible tensor name length");
    const std::string name = binio::get_string(in, name_len, path + ": tensor name");
    if (name != expect_name)
        throw FormatError(path + ": expected tensor \"" + expect_name + "\", found \"" + name +
                          "\"");
    const uint32_t rank = binio::get_u32(in, path + ": tensor rank");
    if (rank > 8) throw FormatError(path + ": implausible tensor rank");
    std::vector<int> shape;
    long numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
        const uint32_t dim = binio::get_u32(in, path + ": tensor dims");
        if (dim == 0) throw FormatError(path + ": zero-sized tensor dimension");
        shape.push_back(static_cast<int>(dim));
        numel *= dim;
    }
    Tensor t(shape);
    for (long i = 0; i < numel; ++i) t.data()[i] = binio::get_f32(in, path + ": tensor data");
    return t;
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<TrainItem>& data) {
    std::ofstream out = binio::open_write(path);
    binio::put_bytes(out, kMagic, 4);
    binio::put_u32(out, kVersion);
    binio::put_u32(out, static_cast<uint32_t>(data.size()));
    for (const auto& item : data) {
        put_tensor(out, "x1", item.x1.values);
        put_tensor(out, "c", item.c.features);
        const char flag = item.c.null_flag ? 1 : 0;
        binio::put_bytes(out, &flag, 1);
    }
    if (!out) throw IoError("failed while writing " + path);
}

std::vector<TrainItem> load_dataset(const std::string& path) {
    std::ifstream in = binio::open_read(path);
    binio::expect_magic(in, kMagic, path);
    const uint32_t version = binio::get_u32(in, path + ": version");
    if (version != kVersion)
        throw FormatError(path + ": unsupported dataset version " + std::to_string(version));
    const uint32_t count = binio::get_u32(in, path + ": item count");
    std::vector<TrainItem> data;
    data.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        TrainItem item;
        item.x1.values = get_tensor(in, path, "x1");
        item.c.features = get_tensor(in, path, "c");
        char flag = 0;
        if (!in.read(&flag, 1))
            throw FormatError(path + ": truncated file while reading the null flag");
        item.c.null_flag = flag != 0;
        data.push_back(std::move(item));
    }
    return data;
}

}  // namespace rfm
