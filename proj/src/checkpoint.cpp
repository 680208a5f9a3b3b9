#include "rarec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace rarec {

namespace {

std::string component_of(const std::string& name) {
    auto pos = name.find('.');
    return pos == std::string::npos ? name : name.substr(0, pos);
}

std::vector<char> blob_bytes(const ParameterSet& tensors,
                             std::map<std::string, std::size_t>& offsets) {
    std::vector<char> blob;
    for (const auto& [name, t] : tensors) {
        offsets[name] = blob.size();
        const std::size_t pos = blob.size();
        blob.resize(pos + t.size() * sizeof(float));
        float* dst = reinterpret_cast<float*>(blob.data() + pos);
        for (std::size_t i = 0; i < t.size(); ++i) dst[i] = static_cast<float>(t.data()[i]);
    }
    return blob;
}

}  // namespace

std::map<std::string, std::uint64_t> component_checksums(const ParameterSet& tensors) {
    std::map<std::string, std::uint64_t> sums;
    std::map<std::string, ParameterSet> by_component;
    for (const auto& [name, t] : tensors) by_component[component_of(name)].emplace(name, t);
    for (const auto& [comp, set] : by_component) sums[comp] = content_checksum(set);
    return sums;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& stem) {
    std::map<std::string, std::size_t> offsets;
    const std::vector<char> blob = blob_bytes(ckpt.tensors, offsets);

    std::ofstream bf(stem + ".tensors", std::ios::binary | std::ios::trunc);
    if (!bf) throw CheckpointError("cannot write " + stem + ".tensors");
    bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    bf.close();
    if (!bf) throw CheckpointError("short write to " + stem + ".tensors");

    std::ostringstream mf;
    mf << "rarec-checkpoint v1\n";
    for (const auto& [k, v] : ckpt.meta) mf << "meta " << k << " " << v << "\n";
    mf << "blobsum fnv1a64 " << to_hex(fnv1a64(blob.data(), blob.size())) << "\n";
    for (const auto& [comp, sum] : component_checksums(ckpt.tensors))
        mf << "component " << comp << " fnv1a64 " << to_hex(sum) << "\n";
    for (const auto& [name, t] : ckpt.tensors) {
        mf << "tensor " << name;
        for (int d : t.shape()) mf << " " << d;
        mf << " @" << offsets.at(name) << "\n";
    }
    mf << "end\n";

    std::ofstream tf(stem + ".manifest", std::ios::trunc);
    if (!tf) throw CheckpointError("cannot write " + stem + ".manifest");
    tf << mf.str();
    tf.close();
    if (!tf) throw CheckpointError("short write to " + stem + ".manifest");
}

Checkpoint load_checkpoint(const std::string& stem) {
    std::ifstream mf(stem + ".manifest");
    if (!mf) throw CheckpointError("cannot open " + stem + ".manifest");
    std::ifstream bf(stem + ".tensors", std::ios::binary);
    if (!bf) throw CheckpointError("cannot open " + stem + ".tensors");
    std::vector<char> blob((std::istreambuf_iterator<char>(bf)),
                           std::istreambuf_iterator<char>());

    Checkpoint out;
    std::map<std::string, std::uint64_t> declared_components;
    std::string line;
    bool saw_header = false, saw_end = false;
    while (std::getline(mf, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (!saw_header) {
            std::string ver;
            ls >> ver;
            if (tag != "rarec-checkpoint" || ver != "v1")
                throw CheckpointError("bad manifest header in " + stem);
            saw_header = true;
            continue;
        }
        if (tag == "meta") {
            std::string key, rest;
            ls >> key;
            std::getline(ls, rest);
            if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
            out.meta[key] = rest;
        } else if (tag == "blobsum") {
            std::string algo, hex;
            ls >> algo >> hex;
            if (fnv1a64(blob.data(), blob.size()) != from_hex(hex))
                throw CheckpointError("blob checksum mismatch in " + stem);
        } else if (tag == "component") {
            std::string comp, algo, hex;
            ls >> comp >> algo >> hex;
            declared_components[comp] = from_hex(hex);
        } else if (tag == "tensor") {
            std::string name;
            ls >> name;
            Shape shape;
            std::string tok;
            std::size_t offset = 0;
            while (ls >> tok) {
                if (!tok.empty() && tok.front() == '@') {
                    offset = static_cast<std::size_t>(std::stoull(tok.substr(1)));
                } else {
                    shape.push_back(std::stoi(tok));
                }
            }
            const std::size_t count = shape_numel(shape);
            if (offset + count * sizeof(float) > blob.size())
                throw CheckpointError("tensor " + name + " overruns blob in " + stem);
            std::vector<double> data(count);
            const float* src = reinterpret_cast<const float*>(blob.data() + offset);
            for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<double>(src[i]);
            out.tensors.emplace(name, Tensor::from(std::move(shape), std::move(data)));
        } else if (tag == "end") {
            saw_end = true;
        } else {
            throw CheckpointError("unknown manifest line '" + tag + "' in " + stem);
        }
    }
    if (!saw_header || !saw_end) throw CheckpointError("truncated manifest in " + stem);

    const auto actual = component_checksums(out.tensors);
    for (const auto& [comp, sum] : declared_components) {
        auto it = actual.find(comp);
        if (it == actual.end() || it->second != sum)
            throw CheckpointError("component checksum mismatch for " + comp + " in " + stem);
    }
    return out;
}

void snap_to_f32(ParameterSet& params) {
    for (auto& [name, t] : params) {
        (void)name;
        for (std::size_t i = 0; i < t.size(); ++i)
            t.data()[i] = static_cast<double>(static_cast<float>(t.data()[i]));
    }
}

}  // namespace rarec
