#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "facekit/embedding.hpp"
#include "facekit/errors.hpp"

namespace facekit {

// One row of the identity table. user_id is deliberately not unique: every
// sighting of a person may add another vector under the same id, and repeat
// ids inside a candidate list are the signal that reinforces a match.
struct IdentityRecord {
    std::int64_t user_id = 0;
    Embedding embedding;
};

struct Match {
    std::int64_t user_id = 0;
    double distance = 0.0;

    bool operator==(const Match&) const = default;
};

// In-memory vector table with CSV persistence and exact brute-force top-k.
// Rows keep insertion order. Readers share; writers are exclusive.
class FaceDb {
public:
    FaceDb() = default;

    explicit FaceDb(std::string path) : path_(std::move(path)) {}

    FaceDb(FaceDb&& other) noexcept { move_from(std::move(other)); }
    FaceDb& operator=(FaceDb&& other) noexcept {
        if (this != &other) move_from(std::move(other));
        return *this;
    }

    void insert(const IdentityRecord& rec) {
        if (rec.user_id < 0) throw StoreError("insert: user_id must be non-negative");
        if (!rec.embedding.all_finite()) throw StoreError("insert: embedding must be finite");
        std::unique_lock lock(mu_);
        rows_.push_back(rec);
        dirty_ = true;
    }

    std::size_t count() const {
        std::shared_lock lock(mu_);
        return rows_.size();
    }

    std::size_t count_for(std::int64_t user_id) const {
        std::shared_lock lock(mu_);
        std::size_t n = 0;
        for (const auto& r : rows_)
            if (r.user_id == user_id) ++n;
        return n;
    }

    std::vector<IdentityRecord> rows() const {
        std::shared_lock lock(mu_);
        return rows_;
    }

    bool dirty() const { return dirty_.load(); }

    const std::string& path() const { return path_; }
    void set_path(std::string path) { path_ = std::move(path); }

    // The k nearest rows by Euclidean distance, ascending; ties broken by
    // insertion index. Returns fewer than k only when the table is smaller.
    std::vector<Match> top_k(const Embedding& query, std::size_t k) const {
        if (k == 0) throw StoreError("top_k: k must be >= 1");
        std::shared_lock lock(mu_);
        if (rows_.empty()) throw StoreError("top_k: store is empty");
        struct Scored {
            double distance;
            std::size_t index;
        };
        std::vector<Scored> scored;
        scored.reserve(rows_.size());
        for (std::size_t i = 0; i < rows_.size(); ++i)
            scored.push_back({euclidean_distance(query, rows_[i].embedding), i});
        const std::size_t take = std::min(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                          scored.end(), [](const Scored& a, const Scored& b) {
                              if (a.distance != b.distance) return a.distance < b.distance;
                              return a.index < b.index;
                          });
        std::vector<Match> out;
        out.reserve(take);
        for (std::size_t i = 0; i < take; ++i)
            out.push_back({rows_[scored[i].index].user_id, scored[i].distance});
        return out;
    }

    // CSV with header id,v1,v2,v3,v4,v5; floats in shortest round-trip form.
    void persist(const std::string& path) const {
        std::shared_lock lock(mu_);
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw StoreError(path + ": cannot open for writing");
        out << "id,v1,v2,v3,v4,v5\n";
        char buf[64];
        for (const auto& r : rows_) {
            out << r.user_id;
            for (int i = 0; i < kEmbeddingDim; ++i) {
                const auto res = std::to_chars(buf, buf + sizeof(buf), r.embedding[i]);
                out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
            }
            out << '\n';
        }
        if (!out) throw StoreError(path + ": short write");
        dirty_ = false;
    }

    void persist() const {
        if (path_.empty()) throw StoreError("persist: no path configured");
        persist(path_);
    }

    static FaceDb load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw StoreError(path + ": cannot open");
        FaceDb db(path);
        std::string line;
        if (!std::getline(in, line)) throw StoreError(path + ": empty file, expected CSV header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line != "id,v1,v2,v3,v4,v5")
            throw StoreError(path + ":1: bad header '" + line + "'");
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            db.rows_.push_back(parse_row(line, path, lineno));
        }
        return db;
    }

private:
    void move_from(FaceDb&& other) {
        std::unique_lock lock(other.mu_);
        rows_ = std::move(other.rows_);
        path_ = std::move(other.path_);
        dirty_.store(other.dirty_.load());
    }

    static IdentityRecord parse_row(const std::string& line, const std::string& path,
                                    std::size_t lineno) {
        const std::string where = path + ":" + std::to_string(lineno);
        std::vector<std::string_view> cols;
        std::string_view rest = line;
        while (true) {
            const auto comma = rest.find(',');
            if (comma == std::string_view::npos) {
                cols.push_back(rest);
                break;
            }
            cols.push_back(rest.substr(0, comma));
            rest = rest.substr(comma + 1);
        }
        if (cols.size() != 1 + kEmbeddingDim)
            throw StoreError(where + ": expected " + std::to_string(1 + kEmbeddingDim) +
                             " columns, got " + std::to_string(cols.size()));
        IdentityRecord rec;
        {
            const auto res =
                std::from_chars(cols[0].data(), cols[0].data() + cols[0].size(), rec.user_id);
            if (res.ec != std::errc() || res.ptr != cols[0].data() + cols[0].size())
                throw StoreError(where + ": unparseable id '" + std::string(cols[0]) + "'");
            if (rec.user_id < 0) throw StoreError(where + ": negative id");
        }
        for (int i = 0; i < kEmbeddingDim; ++i) {
            const auto& c = cols[static_cast<std::size_t>(i) + 1];
            float v = 0.0f;
            const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
            if (res.ec != std::errc() || res.ptr != c.data() + c.size())
                throw StoreError(where + ": unparseable float '" + std::string(c) + "'");
            rec.embedding[i] = v;
        }
        return rec;
    }

    mutable std::shared_mutex mu_;
    std::vector<IdentityRecord> rows_;
    std::string path_;
    mutable std::atomic<bool> dirty_{false};
};

}  // namespace facekit
