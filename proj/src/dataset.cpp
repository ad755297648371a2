#include "coot/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace coot {

const char* to_string(SplitKind kind) {
    switch (kind) {
    case SplitKind::None: return "none";
    case SplitKind::Vertical: return "vertical";
    case SplitKind::Horizontal: return "horizontal";
    }
    return "none";
}

DataView as_view(const DataMatrix& m, const std::string& dataset_id) {
    DataView view;
    view.matrix = m;
    const Eigen::Index n = m.rows();
    view.weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    view.origin.dataset_id = dataset_id;
    view.origin.split = SplitKind::None;
    view.origin.instance_ids.resize(static_cast<size_t>(n));
    std::iota(view.origin.instance_ids.begin(), view.origin.instance_ids.end(), 0);
    view.origin.feature_ids.resize(static_cast<size_t>(m.cols()));
    std::iota(view.origin.feature_ids.begin(), view.origin.feature_ids.end(), 0);
    return view;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    for (auto& f : fields) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
    }
    return fields;
}

} // namespace

DataMatrix load_csv(const std::string& path, bool has_header,
                    const std::optional<std::string>& label_column) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::Io, "cannot open '" + path + "'");
    }

    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::vector<std::string> header;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = split_line(line);
        if (first && has_header) {
            header = fields;
            first = false;
            continue;
        }
        first = false;
        rows.push_back(std::move(fields));
    }
    if (rows.empty()) {
        throw Error(ErrorKind::Parse, "'" + path + "': no data rows");
    }

    const size_t width = rows.front().size();
    if (has_header && header.size() != width) {
        throw Error(ErrorKind::Parse, "'" + path + "': header has " +
                                          std::to_string(header.size()) + " columns, data has " +
                                          std::to_string(width));
    }
    if (!has_header) {
        header.resize(width);
        for (size_t j = 0; j < width; ++j) header[j] = "f" + std::to_string(j);
    }

    int label_idx = -1;
    if (label_column) {
        if (has_header) {
            auto it = std::find(header.begin(), header.end(), *label_column);
            if (it == header.end()) {
                throw Error(ErrorKind::Config, "'" + path + "': no column named '" + *label_column + "'");
            }
            label_idx = static_cast<int>(it - header.begin());
        } else {
            try {
                label_idx = std::stoi(*label_column);
            } catch (const std::exception&) {
                throw Error(ErrorKind::Config, "label column must be an index when the file has no header");
            }
            if (label_idx < 0 || label_idx >= static_cast<int>(width)) {
                throw Error(ErrorKind::Config, "label column index " + std::to_string(label_idx) +
                                                   " out of range for " + std::to_string(width) + " columns");
            }
        }
    }

    DataMatrix m;
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index d = static_cast<Eigen::Index>(width) - (label_idx >= 0 ? 1 : 0);
    m.values.resize(n, d);
    if (label_idx >= 0) m.labels = Eigen::VectorXi(n);
    for (size_t j = 0; j < width; ++j) {
        if (static_cast<int>(j) != label_idx) m.feature_names.push_back(header[j]);
    }

    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != width) {
            throw Error(ErrorKind::Parse, "'" + path + "' row " + std::to_string(i + 1) + ": expected " +
                                              std::to_string(width) + " fields, got " +
                                              std::to_string(rows[i].size()));
        }
        Eigen::Index jj = 0;
        for (size_t j = 0; j < width; ++j) {
            const std::string& cell = rows[i][j];
            if (static_cast<int>(j) == label_idx) {
                int lab = 0;
                try {
                    size_t pos = 0;
                    lab = std::stoi(cell, &pos);
                    if (pos != cell.size()) throw std::invalid_argument(cell);
                } catch (const std::exception&) {
                    throw Error(ErrorKind::Parse, "'" + path + "' row " + std::to_string(i + 1) +
                                                      ": label '" + cell + "' is not an integer");
                }
                if (lab < 0) {
                    throw Error(ErrorKind::Parse, "'" + path + "' row " + std::to_string(i + 1) +
                                                      ": negative label " + std::to_string(lab));
                }
                (*m.labels)(static_cast<Eigen::Index>(i)) = lab;
                continue;
            }
            double value = 0.0;
            try {
                value = parse_double(cell);
            } catch (const Error&) {
                throw Error(ErrorKind::Parse, "'" + path + "' row " + std::to_string(i + 1) + ", column '" +
                                                  header[j] + "': not a number: '" + cell + "'");
            }
            if (!std::isfinite(value)) {
                throw Error(ErrorKind::Parse, "'" + path + "' row " + std::to_string(i + 1) + ", column '" +
                                                  header[j] + "': non-finite value");
            }
            m.values(static_cast<Eigen::Index>(i), jj++) = value;
        }
    }
    return m;
}

DataMatrix standardize(const DataMatrix& m) {
    const Eigen::Index n = m.rows();
    if (n < 2) {
        throw Error(ErrorKind::Config, "standardize needs at least 2 rows, got " + std::to_string(n));
    }
    DataMatrix out = m;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double mean = m.values.col(j).mean();
        const double var = (m.values.col(j).array() - mean).square().sum() / static_cast<double>(n - 1);
        const double sd = std::sqrt(var);
        if (sd > 0.0) {
            out.values.col(j) = (m.values.col(j).array() - mean) / sd;
        } else {
            out.values.col(j).setZero();
        }
    }
    return out;
}

std::vector<DataView> split_vertical(const DataMatrix& m, int r, Rng& rng,
                                     const std::string& dataset_id) {
    const Eigen::Index n = m.rows();
    if (r < 1) throw Error(ErrorKind::Config, "collaborator count must be >= 1");
    if (static_cast<Eigen::Index>(r) > n) {
        throw Error(ErrorKind::Config, "cannot split " + std::to_string(n) + " instances into " +
                                           std::to_string(r) + " views");
    }

    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<DataView> views;
    views.reserve(static_cast<size_t>(r));
    const Eigen::Index base = n / r;
    const Eigen::Index extra = n % r; // first `extra` views take one more
    Eigen::Index offset = 0;
    for (int v = 0; v < r; ++v) {
        const Eigen::Index size = base + (v < extra ? 1 : 0);
        std::vector<int> ids(perm.begin() + offset, perm.begin() + offset + size);
        std::sort(ids.begin(), ids.end()); // original row order within the view
        offset += size;

        DataView view;
        view.matrix.values.resize(size, m.cols());
        view.matrix.feature_names = m.feature_names;
        if (m.labels) view.matrix.labels = Eigen::VectorXi(size);
        for (Eigen::Index i = 0; i < size; ++i) {
            view.matrix.values.row(i) = m.values.row(ids[static_cast<size_t>(i)]);
            if (m.labels) (*view.matrix.labels)(i) = (*m.labels)(ids[static_cast<size_t>(i)]);
        }
        view.weights = Eigen::VectorXd::Constant(size, 1.0 / static_cast<double>(size));
        view.origin.dataset_id = dataset_id;
        view.origin.split = SplitKind::Vertical;
        view.origin.collaborator = v;
        view.origin.instance_ids = std::move(ids);
        view.origin.feature_ids.resize(static_cast<size_t>(m.cols()));
        std::iota(view.origin.feature_ids.begin(), view.origin.feature_ids.end(), 0);
        views.push_back(std::move(view));
    }
    return views;
}

std::vector<DataView> split_horizontal(const DataMatrix& m, int r, int dims, Rng& rng,
                                       const std::string& dataset_id) {
    const Eigen::Index d = m.cols();
    if (r < 1) throw Error(ErrorKind::Config, "collaborator count must be >= 1");
    if (dims < 1 || static_cast<Eigen::Index>(dims) > d) {
        throw Error(ErrorKind::Config, "per-view feature count " + std::to_string(dims) +
                                           " out of range [1, " + std::to_string(d) + "]");
    }

    const Eigen::Index n = m.rows();
    std::vector<DataView> views;
    views.reserve(static_cast<size_t>(r));
    std::vector<int> all(static_cast<size_t>(d));
    std::iota(all.begin(), all.end(), 0);

    for (int v = 0; v < r; ++v) {
        // Distinct features within a view, sampled independently per view.
        std::vector<int> pool = all;
        std::shuffle(pool.begin(), pool.end(), rng);
        std::vector<int> feats(pool.begin(), pool.begin() + dims);
        std::sort(feats.begin(), feats.end());

        DataView view;
        view.matrix.values.resize(n, dims);
        if (m.labels) view.matrix.labels = m.labels;
        for (int j = 0; j < dims; ++j) {
            view.matrix.values.col(j) = m.values.col(feats[static_cast<size_t>(j)]);
            view.matrix.feature_names.push_back(m.feature_names[static_cast<size_t>(feats[static_cast<size_t>(j)])]);
        }
        view.weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
        view.origin.dataset_id = dataset_id;
        view.origin.split = SplitKind::Horizontal;
        view.origin.collaborator = v;
        view.origin.instance_ids.resize(static_cast<size_t>(n));
        std::iota(view.origin.instance_ids.begin(), view.origin.instance_ids.end(), 0);
        view.origin.feature_ids = std::move(feats);
        views.push_back(std::move(view));
    }
    return views;
}

} // namespace coot
