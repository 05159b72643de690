#include "rfm/checkpoint.hpp"

#include <map>

#include "rfm/binio.hpp"

namespace rfm {

namespace {

constexpr char kMagic[5] = "RFCK";
constexpr uint32_t kVersion = 1;

struct Record {
    std::vector<int> shape;
    std::vector<float> data;
};

void put_record(std::ostream& os, const std::string& name, const std::vector<int>& shape,
                const float* data, long n) {
    binio::put_u32(os, static_cast<uint32_t>(name.size()));
    binio::put_bytes(os, name.data(), name.size());
    binio::put_u32(os, static_cast<uint32_t>(shape.size()));
    for (int d : shape) binio::put_u32(os, static_cast<uint32_t>(d));
    for (long i = 0; i < n; ++i) binio::put_f32(os, data[i]);
}

std::map<std::string, Record> read_records(const std::string& path) {
    auto is = binio::open_read(path);
    binio::expect_magic(is, kMagic, path);
    const uint32_t version = binio::get_u32(is, "version");
    if (version != kVersion)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    const uint32_t count = binio::get_u32(is, "tensor count");
    std::map<std::string, Record> out;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = binio::get_u32(is, "name length");
        if (name_len == 0 || name_len > 4096)
            throw FormatError(path + ": implausible tensor name length " +
                              std::to_string(name_len));
        const std::string name = binio::get_string(is, name_len, "tensor name");
        const uint32_t rank = binio::get_u32(is, "rank of " + name);
        if (rank > 8) throw FormatError(path + ": implausible rank " + std::to_string(rank) +
                                        " for tensor " + name);
        Record rec;
        long n = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            const uint32_t dim = binio::get_u32(is, "dims of " + name);
            if (dim == 0) throw FormatError(path + ": zero dimension in tensor " + name);
            rec.shape.push_back(static_cast<int>(dim));
            n *= dim;
        }
        rec.data.resize(static_cast<size_t>(n));
        for (long k = 0; k < n; ++k) rec.data[static_cast<size_t>(k)] = binio::get_f32(is, name);
        if (out.count(name)) throw FormatError(path + ": duplicate tensor name " + name);
        out.emplace(name, std::move(rec));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const EstimatorConfig& config,
                     const LayerParams& params, const AdamState* adam) {
    // assemble name -> record in one ordered map so the file layout is
    // a pure function of the content
    std::map<std::string, Record> records;
    for (const auto& [name, t] : params) {
        if (name == "config" || name.ends_with(".m") || name.ends_with(".v"))
            throw UsageError("parameter name collides with a reserved record: " + name);
        Record rec;
        rec.shape = t.shape();
        rec.data.assign(t.data(), t.data() + t.size());
        records.emplace(name, std::move(rec));
    }
    {
        const std::string json = estimator_config_to_json(config);
        Record rec;
        rec.shape = {static_cast<int>(json.size())};
        rec.data.reserve(json.size());
        for (unsigned char ch : json) rec.data.push_back(static_cast<float>(ch));
        records.emplace("config", std::move(rec));
    }
    if (adam) {
        if (adam->m.size() != params.size() || adam->v.size() != params.size())
            throw ShapeError("save_checkpoint: optimizer state does not cover the parameters");
        for (const auto& [name, t] : params) {
            Record m, v;
            m.shape = t.shape();
            v.shape = t.shape();
            m.data = adam->m.at(name);
            v.data = adam->v.at(name);
            records.emplace(name + ".m", std::move(m));
            records.emplace(name + ".v", std::move(v));
        }
        Record step;
        step.shape = {1};
        step.data = {static_cast<float>(adam->step)};
        records.emplace("adam.step", std::move(step));
    }

    auto os = binio::open_write(path);
    binio::put_bytes(os, kMagic, 4);
    binio::put_u32(os, kVersion);
    binio::put_u32(os, static_cast<uint32_t>(records.size()));
    for (const auto& [name, rec] : records)
        put_record(os, name, rec.shape, rec.data.data(),
                   static_cast<long>(rec.data.size()));
    if (!os) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    auto records = read_records(path);
    Checkpoint ck;

    auto cfg_it = records.find("config");
    if (cfg_it == records.end())
        throw FormatError(path + ": missing the reserved \"config\" record");
    std::string json;
    json.reserve(cfg_it->second.data.size());
    for (float f : cfg_it->second.data) {
        if (f < 0.0f || f > 255.0f)
            throw FormatError(path + ": config record holds a non-byte value");
        json.push_back(static_cast<char>(static_cast<unsigned char>(f)));
    }
    ck.config = estimator_config_from_json(json);
    records.erase(cfg_it);

    if (auto step_it = records.find("adam.step"); step_it != records.end()) {
        ck.adam.step = static_cast<long>(step_it->second.data.at(0));
        ck.has_adam = true;
        records.erase(step_it);
    }

    for (auto& [name, rec] : records) {
        if (name.ends_with(".m") || name.ends_with(".v")) {
            const std::string base = name.substr(0, name.size() - 2);
            auto& slot = name.ends_with(".m") ? ck.adam.m[base] : ck.adam.v[base];
            slot = std::move(rec.data);
            ck.has_adam = true;
            continue;
        }
        auto t = Tensor::from_vector(rec.shape, std::move(rec.data), true);
        ck.params.emplace(name, std::move(t));
    }

    if (ck.has_adam) {
        for (const auto& [name, t] : ck.params) {
            auto m = ck.adam.m.find(name);
            auto v = ck.adam.v.find(name);
            if (m == ck.adam.m.end() || v == ck.adam.v.end() ||
                m->second.size() != static_cast<size_t>(t.size()) ||
                v->second.size() != static_cast<size_t>(t.size()))
                throw FormatError(path + ": optimizer state does not match parameter " + name);
        }
    }
    return ck;
}

}  // namespace rfm
