#pragma once

#include "mailtarget/activity.hpp"
#include "mailtarget/csv.hpp"
#include "mailtarget/date.hpp"
#include "mailtarget/errors.hpp"
#include "mailtarget/evaluation.hpp"
#include "mailtarget/ingest.hpp"
#include "mailtarget/metrics.hpp"
#include "mailtarget/selector.hpp"
#include "mailtarget/simulator.hpp"
#include "mailtarget/trends.hpp"
