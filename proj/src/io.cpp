#include "cebm/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace cebm {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << format_double(row[i]);
        }
        out << '\n';
    }
}

std::size_t CsvTable::col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw std::out_of_range("CsvTable: no column " + name);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            table.header = cells;
            first = false;
        } else {
            std::vector<double> row;
            row.reserve(cells.size());
            for (const auto& c : cells) {
                try {
                    row.push_back(std::stod(c));
                } catch (const std::exception&) {
                    throw std::runtime_error("read_csv: malformed number '" + c + "' in " + path);
                }
            }
            table.rows.push_back(std::move(row));
        }
    }
    if (first) throw std::runtime_error("read_csv: empty file " + path);
    return table;
}

namespace {

void append_le_doubles(std::string& blob, const std::vector<double>& vals) {
    static_assert(sizeof(double) == 8);
    std::size_t off = blob.size();
    blob.resize(off + vals.size() * 8);
    // host is little-endian on every platform we target
    std::memcpy(blob.data() + off, vals.data(), vals.size() * 8);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json manifest;
    manifest["metadata"] = json::parse(ckpt.metadata_json);
    json tensors = json::array();
    std::string blob;
    std::size_t offset = 0;
    for (const auto& [group, pv] : ckpt.groups) {
        for (const auto& e : pv.entries()) {
            json t;
            t["name"] = group + "/" + e.name;
            t["shape"] = e.value.shape;
            t["offset"] = offset;
            tensors.push_back(t);
            append_le_doubles(blob, e.value.data);
            offset += e.value.data.size() * 8;
        }
    }
    manifest["tensors"] = tensors;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << manifest.dump() << '\n';
    out.write(blob.data(), std::streamsize(blob.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_checkpoint: missing manifest");
    json manifest = json::parse(line);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Checkpoint ckpt;
    ckpt.metadata_json = manifest.value("metadata", json::object()).dump();
    for (const auto& t : manifest.at("tensors")) {
        std::string full = t.at("name").get<std::string>();
        auto slash = full.find('/');
        std::string group = full.substr(0, slash);
        std::string name = full.substr(slash + 1);
        std::vector<std::size_t> shape = t.at("shape").get<std::vector<std::size_t>>();
        std::size_t offset = t.at("offset").get<std::size_t>();
        std::size_t count = Tensor::numel_of(shape);
        if (offset + count * 8 > blob.size())
            throw std::runtime_error("load_checkpoint: blob too short");
        Tensor v(shape);
        std::memcpy(v.data.data(), blob.data() + offset, count * 8);
        ckpt.groups[group].add(name, std::move(v));
    }
    return ckpt;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << content;
}

}  // namespace cebm
