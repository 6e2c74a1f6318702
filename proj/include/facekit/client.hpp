#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "facekit/errors.hpp"
#include "facekit/image.hpp"
#include "facekit/net.hpp"
#include "facekit/wire.hpp"

namespace facekit {

struct ClientConfig {
    std::string server_host = "127.0.0.1";
    int server_port = 0;
    float motion_threshold = 0.02f;  // mean absolute intensity change in [0,1]
    int burst_size = 5;              // frames sent per trigger
    std::string request_id_prefix = "req";
    int connect_attempts = 3;
    int retry_backoff_ms = 100;
    double response_timeout_s = 15.0;

    void validate() const {
        if (!(motion_threshold > 0.0f))
            throw FrameError("config: motion threshold must be > 0");
        if (burst_size < 1) throw FrameError("config: burst size must be >= 1");
    }
};

// Mean absolute per-pixel difference; 0 for identical frames, 1 for
// black-vs-white. Frames must agree in size.
inline double motion_score(const Image& prev, const Image& curr) {
    if (prev.width != curr.width || prev.height != curr.height)
        throw FrameError("motion_score: frame dimensions differ (" + std::to_string(prev.width) +
                         "x" + std::to_string(prev.height) + " vs " + std::to_string(curr.width) +
                         "x" + std::to_string(curr.height) + ")");
    double acc = 0.0;
    for (std::size_t i = 0; i < prev.pixels.size(); ++i)
        acc += std::abs(static_cast<double>(prev.pixels[i]) - curr.pixels[i]);
    return prev.pixels.empty() ? 0.0 : acc / static_cast<double>(prev.pixels.size());
}

// Motion gate state machine. A score above the threshold between consecutive
// frames starts collecting the *following* `n` frames as one burst; triggers
// are suppressed while collecting; anything static passes through silently.
// A stream that ends mid-burst produces no partial request.
class MotionGate {
public:
    MotionGate(float threshold, int burst_size) : threshold_(threshold), n_(burst_size) {}

    std::optional<std::vector<Image>> feed(const Image& frame) {
        std::optional<std::vector<Image>> complete;
        if (collecting_) {
            burst_.push_back(frame);
            if (burst_.size() == static_cast<std::size_t>(n_)) {
                collecting_ = false;
                complete = std::move(burst_);
                burst_.clear();
            }
        } else if (prev_ && motion_score(*prev_, frame) > threshold_) {
            collecting_ = true;
            burst_.clear();
        }
        prev_ = frame;
        return complete;
    }

private:
    float threshold_;
    int n_;
    std::optional<Image> prev_;
    bool collecting_ = false;
    std::vector<Image> burst_;
};

// Frames replayed from a directory of PGM files, lexicographic by filename.
inline std::vector<Image> load_frames_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ParseError(dir + ": not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".pgm")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<Image> frames;
    frames.reserve(files.size());
    for (const auto& f : files) frames.push_back(load_pgm(f.string()));
    return frames;
}

namespace detail {

inline net::Socket connect_with_retries(const std::string& host, int port, int attempts,
                                        int backoff_ms) {
    int delay = backoff_ms;
    for (int i = 1;; ++i) {
        try {
            return net::tcp_connect(host, port);
        } catch (const ConnectionError&) {
            if (i >= attempts) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            delay *= 2;
        }
    }
}

}  // namespace detail

struct ClientRunReport {
    std::size_t requests_sent = 0;
    std::size_t bytes_sent = 0;
    std::vector<wire::ResultResponse> results;  // in arrival order
    std::vector<wire::ErrorResponse> errors;
};

// Replays `frames` through the motion gate and ships every completed burst as
// one recognize request. The connection is opened lazily on the first burst,
// so a fully static source sends nothing at all. Responses are collected by a
// reader thread in arrival order; the call returns once every request has
// been answered (or the timeout expires).
inline ClientRunReport run_capture_loop(std::span<const Image> frames, const ClientConfig& cfg) {
    cfg.validate();
    ClientRunReport report;
    MotionGate gate(cfg.motion_threshold, cfg.burst_size);

    net::Socket sock;
    std::thread reader;
    std::mutex mu;
    std::condition_variable cv;
    std::set<std::string> outstanding;
    bool reader_eof = false;

    auto ensure_connected = [&] {
        if (sock.valid()) return;
        sock = detail::connect_with_retries(cfg.server_host, cfg.server_port,
                                            cfg.connect_attempts, cfg.retry_backoff_ms);
        reader = std::thread([&] {
            net::LineReader lines(sock.fd());
            while (auto line = lines.read_line()) {
                if (line->empty()) continue;
                wire::Response resp;
                try {
                    resp = wire::decode_response(*line);
                } catch (const ProtocolError&) {
                    continue;
                }
                std::lock_guard lock(mu);
                if (const auto* r = std::get_if<wire::ResultResponse>(&resp)) {
                    report.results.push_back(*r);
                    outstanding.erase(r->request_id);
                } else if (const auto* e = std::get_if<wire::ErrorResponse>(&resp)) {
                    report.errors.push_back(*e);
                    if (!outstanding.empty()) outstanding.erase(outstanding.begin());
                }
                cv.notify_all();
            }
            std::lock_guard lock(mu);
            reader_eof = true;
            cv.notify_all();
        });
    };

    std::size_t next_id = 1;
    for (const auto& frame : frames) {
        auto burst = gate.feed(frame);
        if (!burst) continue;
        ensure_connected();
        wire::RecognizeRequest req;
        req.request_id = cfg.request_id_prefix + "-" + std::to_string(next_id++);
        for (const auto& f : *burst) req.frames.push_back(encode_pgm(f));
        const std::string line = wire::encode_request(wire::Request{req});
        {
            std::lock_guard lock(mu);
            outstanding.insert(req.request_id);
        }
        if (!net::send_line(sock.fd(), line))
            throw ConnectionError("send failed for " + req.request_id);
        report.bytes_sent += line.size() + 1;
        report.requests_sent += 1;
    }

    if (sock.valid()) {
        std::unique_lock lock(mu);
        const bool done = cv.wait_for(
            lock, std::chrono::duration<double>(cfg.response_timeout_s),
            [&] { return outstanding.empty() || reader_eof; });
        lock.unlock();
        sock.shutdown_both();
        if (reader.joinable()) reader.join();
        if (!done || !outstanding.empty())
            throw ConnectionError("timed out waiting for " + std::to_string(outstanding.size()) +
                                  " response(s)");
    }
    return report;
}

// Reads a PGM from disk and registers it under `user_id`. The server's
// acknowledgement (echoing the stored vector) is returned; a server-side
// rejection is surfaced as StoreError with the server's message.
inline wire::RegisteredResponse register_user(const std::string& image_path, std::int64_t user_id,
                                              const std::string& host, int port,
                                              int connect_attempts = 3, int backoff_ms = 100) {
    std::ifstream in(image_path, std::ios::binary);
    if (!in) throw ParseError(image_path + ": cannot open file");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    net::Socket sock = detail::connect_with_retries(host, port, connect_attempts, backoff_ms);
    wire::RegisterRequest req{user_id, std::move(bytes)};
    if (!net::send_line(sock.fd(), wire::encode_request(wire::Request{req})))
        throw ConnectionError("send failed");
    net::LineReader lines(sock.fd());
    const auto line = lines.read_line();
    if (!line) throw ConnectionError("server closed the connection before answering");
    const wire::Response resp = wire::decode_response(*line);
    if (const auto* ok = std::get_if<wire::RegisteredResponse>(&resp)) return *ok;
    if (const auto* err = std::get_if<wire::ErrorResponse>(&resp)) throw StoreError(err->message);
    throw ProtocolError("unexpected response type to a register request");
}

}  // namespace facekit
