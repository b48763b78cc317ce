#include "crl/core.hpp"

#include "crl/rng.hpp"

namespace crl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
  storage_.reserve(capacity < (1u << 20) ? capacity : (1u << 20));
}

void ReplayBuffer::append(Transition t) {
  if (count_ == 0 && write_cursor_ == 0) {
    state_dim_ = t.state.size();
    action_dim_ = t.action.size();
    event_dim_ = t.events.size();
  } else if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_ ||
             t.action.size() != action_dim_ || t.events.size() != event_dim_) {
    throw std::invalid_argument(
        "transition shape mismatch: expected state " + std::to_string(state_dim_) +
        ", action " + std::to_string(action_dim_) + ", events " + std::to_string(event_dim_));
  }
  if (t.next_state.size() != state_dim_) {
    throw std::invalid_argument("next_state dimension differs from state dimension");
  }
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(t));
  } else {
    storage_[write_cursor_] = std::move(t);
  }
  write_cursor_ = (write_cursor_ + 1) % capacity_;
  if (count_ < capacity_) ++count_;
}

const Transition& ReplayBuffer::at_age(std::size_t age_from_oldest) const {
  if (count_ < capacity_) return storage_[age_from_oldest];
  return storage_[(write_cursor_ + age_from_oldest) % capacity_];
}

Batch ReplayBuffer::sample_uniform(std::size_t n, std::mt19937_64& rng) const {
  if (n == 0) throw std::invalid_argument("sample size must be positive");
  if (count_ == 0) {
    throw InsufficientData("cannot sample from an empty buffer; warmup incomplete");
  }
  Batch out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(storage_[rand_index(rng, count_)]);
  }
  return out;
}

Batch ReplayBuffer::last_n(std::size_t n) const {
  if (n > count_) {
    throw InsufficientData("requested last " + std::to_string(n) + " transitions but only " +
                           std::to_string(count_) + " stored");
  }
  Batch out;
  out.reserve(n);
  for (std::size_t i = count_ - n; i < count_; ++i) {
    out.push_back(at_age(i));
  }
  return out;
}

}  // namespace crl
