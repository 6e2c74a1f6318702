#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "facekit/errors.hpp"
#include "facekit/image.hpp"
#include "facekit/model.hpp"
#include "facekit/rng.hpp"

namespace facekit {

// Faces grouped by subject. Iteration order is the sorted subject id, which
// keeps every seeded operation on top of it reproducible.
struct FaceDataset {
    std::map<std::string, std::vector<FaceImage>> subjects;
    int source_width = 0;
    int source_height = 0;

    std::size_t image_count() const {
        std::size_t n = 0;
        for (const auto& [id, imgs] : subjects) n += imgs.size();
        return n;
    }
    std::size_t subject_count() const { return subjects.size(); }
};

// Loads an ORL-style tree: one subdirectory per subject, binary P5 PGM files
// inside. Every image is resized to the model's 100x100 input and scaled to
// [0,1]. Subjects need at least two images so that same-person pairs exist.
inline FaceDataset load_orl(const std::string& dir_path) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir_path)) throw DatasetError(dir_path + ": not a directory");
    FaceDataset ds;
    std::vector<fs::path> subject_dirs;
    for (const auto& entry : fs::directory_iterator(dir_path))
        if (entry.is_directory()) subject_dirs.push_back(entry.path());
    std::sort(subject_dirs.begin(), subject_dirs.end());
    for (const auto& sdir : subject_dirs) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(sdir))
            if (entry.is_regular_file() && entry.path().extension() == ".pgm")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) continue;
        const std::string subject = sdir.filename().string();
        std::vector<FaceImage> imgs;
        for (const auto& f : files) {
            const Image im = load_pgm(f.string());
            if (ds.source_width == 0) {
                ds.source_width = im.width;
                ds.source_height = im.height;
            }
            imgs.push_back(face_image_from_raster(im, subject + "/" + f.filename().string()));
        }
        if (imgs.size() < 2)
            throw DatasetError(sdir.string() + ": subject has fewer than 2 images");
        ds.subjects[subject] = std::move(imgs);
    }
    if (ds.subjects.empty()) throw DatasetError(dir_path + ": no subject directories found");
    return ds;
}

// Keeps only the first `n` subjects (by sorted id). Used by smoke profiles.
inline FaceDataset take_subjects(const FaceDataset& ds, std::size_t n) {
    FaceDataset out;
    out.source_width = ds.source_width;
    out.source_height = ds.source_height;
    for (const auto& [id, imgs] : ds.subjects) {
        if (out.subjects.size() >= n) break;
        out.subjects[id] = imgs;
    }
    return out;
}

// Per-subject image-level split: floor(fraction * count) images to train,
// the rest to test, membership shuffled by `seed`. Every subject keeps at
// least one image on each side or the split fails.
inline std::pair<FaceDataset, FaceDataset> split(const FaceDataset& ds, double fraction,
                                                 std::uint32_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw DatasetError("split fraction must lie in (0,1)");
    FaceDataset train, test;
    train.source_width = test.source_width = ds.source_width;
    train.source_height = test.source_height = ds.source_height;
    Rng rng(seed);
    for (const auto& [id, imgs] : ds.subjects) {
        std::vector<std::size_t> idx(imgs.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        const std::size_t n_train =
            static_cast<std::size_t>(fraction * static_cast<double>(imgs.size()));
        if (n_train == 0)
            throw DatasetError("split leaves subject '" + id + "' with no training images");
        if (n_train == imgs.size())
            throw DatasetError("split leaves subject '" + id + "' with no test images");
        for (std::size_t i = 0; i < imgs.size(); ++i)
            (i < n_train ? train : test).subjects[id].push_back(imgs[idx[i]]);
    }
    return {std::move(train), std::move(test)};
}

// A labelled pair for the similarity objective. dissimilar == 0 means both
// images come from the same subject. Pointers refer into the dataset that
// produced them, which must outlive the pair list.
struct TrainingPair {
    const FaceImage* a = nullptr;
    const FaceImage* b = nullptr;
    int dissimilar = 0;
};

// Draws `count` pairs, roughly half same-subject and half cross-subject.
// Same-subject pairs always use two distinct images.
inline std::vector<TrainingPair> sample_pairs(const FaceDataset& ds, std::size_t count,
                                              std::uint32_t seed) {
    if (count == 0) throw DatasetError("sample_pairs: count must be >= 1");
    std::vector<const std::vector<FaceImage>*> groups;
    std::vector<const std::vector<FaceImage>*> pairable;  // subjects with >= 2 images
    for (const auto& [id, imgs] : ds.subjects) {
        if (imgs.empty()) continue;
        groups.push_back(&imgs);
        if (imgs.size() >= 2) pairable.push_back(&imgs);
    }
    if (groups.empty()) throw DatasetError("sample_pairs: dataset is empty");
    if (pairable.empty())
        throw DatasetError("sample_pairs: no subject has 2 images, cannot form genuine pairs");
    Rng rng(seed);
    std::vector<TrainingPair> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        bool same = groups.size() < 2 || rng.next_bool();
        if (same) {
            const auto& imgs = *pairable[rng.next_index(pairable.size())];
            const std::size_t ia = rng.next_index(imgs.size());
            std::size_t ib = rng.next_index(imgs.size() - 1);
            if (ib >= ia) ++ib;
            out.push_back({&imgs[ia], &imgs[ib], 0});
        } else {
            const std::size_t sa = rng.next_index(groups.size());
            std::size_t sb = rng.next_index(groups.size() - 1);
            if (sb >= sa) ++sb;
            const auto& ga = *groups[sa];
            const auto& gb = *groups[sb];
            out.push_back({&ga[rng.next_index(ga.size())], &gb[rng.next_index(gb.size())], 1});
        }
    }
    return out;
}

}  // namespace facekit
