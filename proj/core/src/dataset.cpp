#include "fedhpo/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedhpo {

Dataset Dataset::select(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), dim());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
        features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels[i] = labels[rows[i]];
  }
  return out;
}

void validate(const Dataset& ds) {
  if (ds.features.rows() != static_cast<Eigen::Index>(ds.labels.size())) {
    throw std::invalid_argument(
        "dataset: feature rows (" + std::to_string(ds.features.rows()) +
        ") and label count (" + std::to_string(ds.labels.size()) +
        ") disagree");
  }
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] >= ds.num_classes) {
      throw std::invalid_argument("dataset: label " +
                                  std::to_string(ds.labels[i]) + " at row " +
                                  std::to_string(i) + " outside [0, " +
                                  std::to_string(ds.num_classes) + ")");
    }
  }
}

Dataset concat(const std::vector<const Dataset*>& parts) {
  Dataset out;
  Eigen::Index total = 0;
  const Dataset* first = nullptr;  // empty splits do not constrain the shape
  for (const Dataset* p : parts) {
    if (p->empty()) continue;
    if (first == nullptr) first = p;
    total += p->size();
  }
  if (first == nullptr) return out;
  out.num_classes = first->num_classes;
  out.features.resize(total, first->dim());
  out.labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index row = 0;
  for (const Dataset* p : parts) {
    if (p->empty()) continue;
    if (p->dim() != out.features.cols() || p->num_classes != out.num_classes) {
      throw std::invalid_argument("concat: incompatible dataset shapes");
    }
    out.features.middleRows(row, p->size()) = p->features;
    out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
    row += p->size();
  }
  return out;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path,
                        std::size_t offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) {
    throw ParseError(path + ": truncated at byte " + std::to_string(offset) +
                     " (expected 4 more bytes)");
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

struct IdxFile {
  std::vector<std::uint32_t> dims;
  std::vector<unsigned char> data;
};

IdxFile read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open file");
  std::uint32_t magic = read_be32(in, path, 0);
  if ((magic & 0xffff0000u) != 0) {
    throw ParseError(path + ": bad magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", magic);
      return std::string(buf);
    }() + " at byte 0 (first two bytes must be zero)");
  }
  const unsigned dtype = (magic >> 8) & 0xff;
  if (dtype != 0x08) {
    throw ParseError(path + ": unsupported IDX data type 0x" +
                     std::to_string(dtype) + " (only unsigned byte 0x08)");
  }
  const unsigned ndims = magic & 0xff;
  if (ndims == 0 || ndims > 3) {
    throw ParseError(path + ": unsupported dimension count " +
                     std::to_string(ndims));
  }
  IdxFile f;
  std::size_t expected = 1;
  for (unsigned i = 0; i < ndims; ++i) {
    f.dims.push_back(read_be32(in, path, 4 + 4 * i));
    expected *= f.dims.back();
  }
  f.data.resize(expected);
  in.read(reinterpret_cast<char*>(f.data.data()),
          static_cast<std::streamsize>(expected));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != expected) {
    throw ParseError(path + ": truncated payload, expected " +
                     std::to_string(expected) + " bytes, got " +
                     std::to_string(got));
  }
  return f;
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  IdxFile images = read_idx(images_path);
  IdxFile labels = read_idx(labels_path);
  if (labels.dims.size() != 1) {
    throw ParseError(labels_path + ": label file must be one-dimensional");
  }
  const std::size_t n = images.dims[0];
  if (labels.dims[0] != n) {
    throw ParseError(images_path + ": " + std::to_string(n) + " images vs " +
                     std::to_string(labels.dims[0]) + " labels");
  }
  std::size_t feat = 1;
  for (std::size_t i = 1; i < images.dims.size(); ++i) feat *= images.dims[i];

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n),
                     static_cast<Eigen::Index>(feat));
  ds.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < feat; ++j) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          images.data[i * feat + j] / 255.0;
    }
    ds.labels[i] = labels.data[i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = max_label + 1;
  validate(ds);
  return ds;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (line.rfind("label", 0) != 0) {
    throw ParseError(path + ": line 1: expected header `label,f0,f1,...`");
  }
  std::size_t cols = static_cast<std::size_t>(
      std::count(line.begin(), line.end(), ','));

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      double v;
      try {
        std::size_t pos = 0;
        v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(path + ": line " + std::to_string(lineno) +
                         ": cannot parse `" + cell + "` as a number");
      }
      if (col == 0) {
        int label = static_cast<int>(v);
        if (v != label || label < 0) {
          throw ParseError(path + ": line " + std::to_string(lineno) +
                           ": label `" + cell +
                           "` is not a nonnegative integer");
        }
        labels.push_back(label);
      } else {
        values.push_back(v);
      }
      ++col;
    }
    if (col != cols + 1) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": expected " + std::to_string(cols + 1) +
                       " fields, got " + std::to_string(col));
    }
  }

  Dataset ds;
  const auto n = static_cast<Eigen::Index>(labels.size());
  ds.features.resize(n, static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      ds.features(i, j) = values[static_cast<std::size_t>(i) * cols +
                                 static_cast<std::size_t>(j)];
    }
  }
  ds.labels = std::move(labels);
  ds.num_classes = ds.labels.empty()
                       ? 0
                       : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  validate(ds);
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // LF line endings everywhere
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "label";
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ",f" << j;
  out << "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    out << ds.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < ds.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.10g", ds.features(i, j));
      out << ',' << buf;
    }
    out << "\n";
  }
}

}  // namespace fedhpo
