#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace sfd {

// Dynamic tape: ops append records in execution order, backward replays them
// in reverse, each exactly once. A tape is single-owner; nothing here is
// thread-safe by design (parallelism lives inside the kernels).
template <class T>
class Tape {
public:
    struct Record {
        const char* op;
        Tensor<T> output;
        std::function<void()> backward;
    };

    void record(const char* op, Tensor<T> output, std::function<void()> fn) {
        records_.push_back({op, std::move(output), std::move(fn)});
    }

    size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and runs every record backward in reverse.
    // Leaf grad buffers accumulate across calls until explicitly zeroed;
    // intermediate grads (op outputs) are reset per call so each backward
    // contributes exactly one d(loss)/d(leaf).
    void backward(Tensor<T> loss) {
        if (!loss.defined() || loss.numel() != 1)
            throw ContractError("backward: loss must be a defined scalar tensor");
        for (auto& r : records_) r.output.zero_grad();
        loss.grad()[0] += T(1);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
    }

private:
    std::vector<Record> records_;
};

template <class T>
Tape<T>*& active_tape_slot() {
    thread_local Tape<T>* slot = nullptr;
    return slot;
}

template <class T>
Tape<T>* active_tape() {
    return active_tape_slot<T>();
}

// RAII scope that makes a tape the recording target. Ops executed while no
// scope is active run in inference mode and record nothing.
template <class T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& tape) : prev_(active_tape_slot<T>()) {
        active_tape_slot<T>() = &tape;
    }
    ~TapeScope() { active_tape_slot<T>() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* prev_;
};

// Suppresses recording inside an active tape scope (sampling, evaluation).
template <class T>
class NoTapeScope {
public:
    NoTapeScope() : prev_(active_tape_slot<T>()) { active_tape_slot<T>() = nullptr; }
    ~NoTapeScope() { active_tape_slot<T>() = prev_; }
    NoTapeScope(const NoTapeScope&) = delete;
    NoTapeScope& operator=(const NoTapeScope&) = delete;

private:
    Tape<T>* prev_;
};

}  // namespace sfd
