#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <poll.h>

#include "facekit/detect.hpp"
#include "facekit/errors.hpp"
#include "facekit/image.hpp"
#include "facekit/model.hpp"
#include "facekit/net.hpp"
#include "facekit/store.hpp"
#include "facekit/wire.hpp"

namespace facekit {

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks an ephemeral port
    std::size_t k = 3;
    int embed_workers = 4;
    float detector_threshold = 0.02f;
    int synthetic_embed_latency_ms = 0;  // test hook: replaces the model call
    int batch_window_ms = 0;             // 0 = no cross-request batching
    std::string activity_log_path;

    void validate() const {
        if (k < 1) throw ConnectionError("config: k must be >= 1");
        if (embed_workers < 1) throw ConnectionError("config: embed_workers must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Request pipeline: decode -> detect -> embed -> match. Split into a prepare
// phase (no model work) and a finish phase so a worker can run the embedding
// for several requests as one batched forward.
// ---------------------------------------------------------------------------

class RecognitionPipeline {
public:
    RecognitionPipeline(std::shared_ptr<const SiameseParams> params, std::shared_ptr<FaceDb> db,
                        const ServerConfig& cfg)
        : params_(std::move(params)),
          db_(std::move(db)),
          detector_(std::make_unique<VarianceGateDetector>(cfg.detector_threshold)),
          k_(cfg.k),
          synthetic_latency_ms_(cfg.synthetic_embed_latency_ms) {
        if (!cfg.activity_log_path.empty()) {
            log_.open(cfg.activity_log_path, std::ios::app);
            if (!log_) throw StoreError(cfg.activity_log_path + ": cannot open activity log");
        }
    }

    void set_detector(std::unique_ptr<FaceDetector> det) { detector_ = std::move(det); }

    struct Prepared {
        wire::Request request;
        std::vector<DetectedFace> faces;    // register: the one face; recognize: all detections
        std::size_t responder_count = 0;    // leading faces that get their own result object
        std::optional<wire::ErrorResponse> early_error;  // set when prepare already failed
    };

    Prepared prepare(const wire::Request& req) {
        Prepared p;
        p.request = req;
        try {
            if (const auto* r = std::get_if<wire::RegisterRequest>(&req)) {
                if (r->image.empty()) throw ProtocolError("malformed request: empty image payload");
                const Image frame = decode_pgm(r->image, "register image");
                auto faces = detector_->detect(frame);
                if (faces.empty())
                    throw StoreError("register rejected: no face detected in image");
                if (faces.size() > 1)
                    throw StoreError("register rejected: expected exactly one face, found " +
                                     std::to_string(faces.size()));
                p.faces = std::move(faces);
                p.responder_count = 1;
            } else if (const auto* r = std::get_if<wire::RecognizeRequest>(&req)) {
                bool any_decoded = false;
                bool have_responders = false;
                for (std::size_t i = 0; i < r->frames.size(); ++i) {
                    Image frame;
                    try {
                        frame = decode_pgm(r->frames[i], "frame " + std::to_string(i));
                    } catch (const ParseError&) {
                        continue;  // undecodable frame is dropped like a no-face frame
                    }
                    any_decoded = true;
                    auto faces = detector_->detect(frame);
                    if (faces.empty()) continue;  // no face: frame discarded
                    if (!have_responders) {
                        // first frame with detections answers the request;
                        // responders are found before any extras, so they
                        // land at the front of the list
                        p.responder_count = faces.size();
                        have_responders = true;
                    }
                    for (auto& f : faces) p.faces.push_back(std::move(f));
                }
                if (!any_decoded)
                    throw ProtocolError("malformed request: no frame could be decoded");
            }
        } catch (const std::exception& e) {
            p.early_error = wire::ErrorResponse{e.what()};
            p.faces.clear();
            p.responder_count = 0;
        }
        return p;
    }

    // Embeds every face of every prepared request in one batched forward.
    std::vector<Embedding> embed_batch(const std::vector<FaceImage>& faces) {
        if (faces.empty()) return {};
        if (synthetic_latency_ms_ > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(
                static_cast<long>(synthetic_latency_ms_) * static_cast<long>(faces.size())));
            std::vector<Embedding> out(faces.size());
            for (std::size_t i = 0; i < faces.size(); ++i) out[i] = stub_embedding(faces[i]);
            return out;
        }
        return embed_all(*params_, faces);
    }

    std::vector<wire::Response> finish(const Prepared& p, std::span<const Embedding> embeddings) {
        if (p.early_error) return {*p.early_error};
        if (const auto* r = std::get_if<wire::RegisterRequest>(&p.request)) {
            const Embedding& e = embeddings[0];
            db_->insert({r->user_id, e});
            return {wire::RegisteredResponse{r->user_id, e}};
        }
        const auto* r = std::get_if<wire::RecognizeRequest>(&p.request);
        if (!r) return {wire::PongResponse{}};

        std::vector<wire::Response> out;
        if (p.faces.empty()) {
            out.push_back(wire::ResultResponse{r->request_id, std::nullopt, {}, false});
            return out;
        }
        for (std::size_t i = 0; i < p.faces.size(); ++i) {
            std::vector<Match> matches;
            bool empty_store = false;
            try {
                matches = db_->top_k(embeddings[i], k_);
            } catch (const StoreError&) {
                empty_store = true;
            }
            if (i < p.responder_count)
                out.push_back(
                    wire::ResultResponse{r->request_id, p.faces[i].face_uid, matches, empty_store});
            log_activity(r->request_id, p.faces[i].face_uid, matches);
        }
        return out;
    }

    // Convenience single-request paths (also what the unit tests drive).
    wire::Response handle_register(const wire::RegisterRequest& req) {
        const Prepared p = prepare(wire::Request{req});
        if (p.early_error) return *p.early_error;
        std::vector<FaceImage> faces;
        for (const auto& f : p.faces) faces.push_back(f.face);
        return finish(p, embed_batch(faces))[0];
    }

    std::vector<wire::Response> handle_recognize(const wire::RecognizeRequest& req) {
        const Prepared p = prepare(wire::Request{req});
        if (p.early_error) return {*p.early_error};
        std::vector<FaceImage> faces;
        for (const auto& f : p.faces) faces.push_back(f.face);
        return finish(p, embed_batch(faces));
    }

    FaceDb& db() { return *db_; }

private:
    // Cheap deterministic stand-in used under synthetic latency: the mean of
    // five horizontal bands of the face.
    static Embedding stub_embedding(const FaceImage& img) {
        Embedding e;
        const int band = kFaceSide / kEmbeddingDim;
        for (int b = 0; b < kEmbeddingDim; ++b) {
            float s = 0.0f;
            for (int y = b * band; y < (b + 1) * band; ++y)
                for (int x = 0; x < kFaceSide; ++x)
                    s += img.pixels[static_cast<std::size_t>(y) * kFaceSide + x];
            e[b] = s / static_cast<float>(band * kFaceSide);
        }
        return e;
    }

    void log_activity(const std::string& request_id, const std::string& face_uid,
                      const std::vector<Match>& matches) {
        if (!log_.is_open() || matches.empty()) return;
        const auto ts = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count();
        wire::json line;
        line["ts"] = ts;
        line["request_id"] = request_id;
        line["face_uid"] = face_uid;
        line["user_id"] = matches[0].user_id;
        line["distance"] = matches[0].distance;
        std::lock_guard lock(log_mu_);
        log_ << line.dump() << "\n";
        log_.flush();
    }

    std::shared_ptr<const SiameseParams> params_;
    std::shared_ptr<FaceDb> db_;
    std::unique_ptr<FaceDetector> detector_;
    std::size_t k_;
    int synthetic_latency_ms_;
    std::ofstream log_;
    std::mutex log_mu_;
};

// ---------------------------------------------------------------------------
// TCP server. One reader and one writer thread per connection plus a fixed
// worker pool for embedding. The read path never runs model code: pings are
// answered inline, everything else becomes a queued job. Workers hand their
// responses to the connection's writer; they never touch the socket.
// ---------------------------------------------------------------------------

class Server {
public:
    Server(ServerConfig cfg, std::shared_ptr<const SiameseParams> params,
           std::shared_ptr<FaceDb> db)
        : cfg_(cfg), pipeline_(std::move(params), std::move(db), cfg) {
        cfg_.validate();
    }

    ~Server() { stop(); }

    RecognitionPipeline& pipeline() { return pipeline_; }

    void start() {
        listener_ = net::listen_on(cfg_.host, cfg_.port);
        port_ = net::bound_port(listener_);
        stopping_ = false;
        accept_thread_ = std::thread([this] { accept_loop(); });
        for (int i = 0; i < cfg_.embed_workers; ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    // Graceful: stops accepting, lets queued work finish, flushes every
    // response, then tears the connections down.
    void stop() {
        if (stopping_.exchange(true)) {
            return;
        }
        listener_.shutdown_both();
        if (accept_thread_.joinable()) accept_thread_.join();
        listener_.close_fd();

        std::vector<std::shared_ptr<ConnState>> conns;
        {
            std::lock_guard lock(conns_mu_);
            conns = conns_;
        }
        for (auto& c : conns) c->sock.shutdown_read();
        for (auto& c : conns)
            if (c->reader.joinable()) c->reader.join();

        {
            // every job a reader enqueued is now visible; wait them out
            std::unique_lock lock(jobs_mu_);
            jobs_done_cv_.wait(lock, [this] { return jobs_.empty() && active_jobs_ == 0; });
            workers_exit_ = true;
        }
        jobs_cv_.notify_all();
        for (auto& w : workers_) w.join();
        workers_.clear();

        for (auto& c : conns) {
            {
                std::lock_guard lock(c->mu);
                c->reader_done = true;
            }
            c->cv.notify_all();
            if (c->writer.joinable()) c->writer.join();
            c->sock.close_fd();
        }
        {
            std::lock_guard lock(conns_mu_);
            conns_.clear();
        }
    }

    int port() const { return port_; }

    std::size_t requests_handled() const { return requests_handled_.load(); }

private:
    struct ConnState {
        net::Socket sock;
        std::mutex mu;
        std::condition_variable cv;
        std::deque<std::string> outbox;
        bool reader_done = false;
        std::size_t pending = 0;  // queued jobs whose responses are still owed
        std::thread reader, writer;

        void push_line(std::string line) {
            {
                std::lock_guard lock(mu);
                outbox.push_back(std::move(line));
            }
            cv.notify_all();
        }
    };

    struct Job {
        std::shared_ptr<ConnState> conn;
        wire::Request request;
    };

    void accept_loop() {
        while (!stopping_) {
            pollfd pfd{listener_.fd(), POLLIN, 0};
            const int rc = ::poll(&pfd, 1, 100);
            if (stopping_) break;
            if (rc <= 0) continue;
            const int fd = ::accept(listener_.fd(), nullptr, nullptr);
            if (fd < 0) continue;
            auto conn = std::make_shared<ConnState>();
            conn->sock = net::Socket(fd);
            {
                std::lock_guard lock(conns_mu_);
                conns_.push_back(conn);
            }
            conn->reader = std::thread([this, conn] { reader_loop(conn); });
            conn->writer = std::thread([this, conn] { writer_loop(conn); });
        }
    }

    void reader_loop(const std::shared_ptr<ConnState>& conn) {
        net::LineReader reader(conn->sock.fd());
        while (true) {
            std::optional<std::string> line;
            try {
                line = reader.read_line();
            } catch (const ProtocolError& e) {
                conn->push_line(wire::encode_response(wire::ErrorResponse{e.what()}));
                break;
            }
            if (!line) break;
            if (line->empty()) continue;
            requests_handled_.fetch_add(1);
            wire::Request req;
            try {
                req = wire::decode_request(*line);
            } catch (const ProtocolError& e) {
                // malformed line: answer with an error, keep the connection
                conn->push_line(wire::encode_response(wire::ErrorResponse{e.what()}));
                continue;
            }
            if (std::holds_alternative<wire::PingRequest>(req)) {
                conn->push_line(wire::encode_response(wire::PongResponse{}));
                continue;
            }
            {
                std::lock_guard lock(conn->mu);
                conn->pending += 1;
            }
            {
                std::lock_guard lock(jobs_mu_);
                jobs_.push_back(Job{conn, std::move(req)});
            }
            jobs_cv_.notify_one();
        }
        {
            std::lock_guard lock(conn->mu);
            conn->reader_done = true;
        }
        conn->cv.notify_all();
    }

    void writer_loop(const std::shared_ptr<ConnState>& conn) {
        std::unique_lock lock(conn->mu);
        while (true) {
            conn->cv.wait(lock, [&] {
                return !conn->outbox.empty() || (conn->reader_done && conn->pending == 0);
            });
            bool alive = true;
            while (!conn->outbox.empty()) {
                std::string line = std::move(conn->outbox.front());
                conn->outbox.pop_front();
                lock.unlock();
                alive = net::send_line(conn->sock.fd(), std::move(line));
                lock.lock();
                if (!alive) break;
            }
            if (!alive) break;
            if (conn->outbox.empty() && conn->reader_done && conn->pending == 0) break;
        }
    }

    void worker_loop() {
        while (true) {
            std::vector<Job> batch;
            {
                std::unique_lock lock(jobs_mu_);
                jobs_cv_.wait(lock, [this] { return !jobs_.empty() || workers_exit_; });
                if (jobs_.empty() && workers_exit_) return;
                batch.push_back(std::move(jobs_.front()));
                jobs_.pop_front();
                active_jobs_ += 1;
            }
            if (cfg_.batch_window_ms > 0) gather_more(batch);
            process_batch(batch);
            {
                std::lock_guard lock(jobs_mu_);
                active_jobs_ -= batch.size();
            }
            jobs_done_cv_.notify_all();
        }
    }

    // Batch accumulation window: hold the first job briefly and fold in
    // whatever else arrives so one forward pass serves several requests.
    void gather_more(std::vector<Job>& batch) {
        constexpr std::size_t kMaxBatch = 8;
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::milliseconds(cfg_.batch_window_ms);
        std::unique_lock lock(jobs_mu_);
        while (batch.size() < kMaxBatch) {
            if (!jobs_cv_.wait_until(lock, deadline,
                                     [this] { return !jobs_.empty() || workers_exit_; }))
                break;
            if (jobs_.empty()) break;
            batch.push_back(std::move(jobs_.front()));
            jobs_.pop_front();
            active_jobs_ += 1;
        }
    }

    void process_batch(std::vector<Job>& batch) {
        std::vector<RecognitionPipeline::Prepared> prepared;
        prepared.reserve(batch.size());
        std::vector<FaceImage> faces;
        for (const auto& job : batch) {
            prepared.push_back(pipeline_.prepare(job.request));
            for (const auto& f : prepared.back().faces) faces.push_back(f.face);
        }
        std::vector<Embedding> embeddings;
        try {
            embeddings = pipeline_.embed_batch(faces);
        } catch (const std::exception& e) {
            for (auto& job : batch) {
                job.conn->push_line(wire::encode_response(wire::ErrorResponse{e.what()}));
                finish_job(job);
            }
            return;
        }
        std::size_t cursor = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const auto span = std::span<const Embedding>(embeddings)
                                  .subspan(cursor, prepared[i].faces.size());
            cursor += prepared[i].faces.size();
            std::vector<wire::Response> responses;
            try {
                responses = pipeline_.finish(prepared[i], span);
            } catch (const std::exception& e) {
                responses = {wire::ErrorResponse{e.what()}};
            }
            for (const auto& r : responses)
                batch[i].conn->push_line(wire::encode_response(r));
            finish_job(batch[i]);
        }
    }

    static void finish_job(const Job& job) {
        {
            std::lock_guard lock(job.conn->mu);
            job.conn->pending -= 1;
        }
        job.conn->cv.notify_all();
    }

    ServerConfig cfg_;
    RecognitionPipeline pipeline_;
    net::Socket listener_;
    int port_ = 0;
    std::atomic<bool> stopping_{true};
    std::thread accept_thread_;

    std::mutex conns_mu_;
    std::vector<std::shared_ptr<ConnState>> conns_;

    std::mutex jobs_mu_;
    std::condition_variable jobs_cv_;
    std::condition_variable jobs_done_cv_;
    std::deque<Job> jobs_;
    std::size_t active_jobs_ = 0;
    bool workers_exit_ = false;
    std::vector<std::thread> workers_;

    std::atomic<std::size_t> requests_handled_{0};
};

}  // namespace facekit
