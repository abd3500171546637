/* Exercises the shared library through its C interface only. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/stat.h>

#include "uqfuse/uqfuse.h"

static int failures = 0;

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: CHECK(%s) failed\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

#define OK(call)                                                      \
  do {                                                                \
    uqf_status st_ = (call);                                          \
    if (st_ != UQF_OK) {                                              \
      fprintf(stderr, "%s:%d: %s -> %d (%s)\n", __FILE__, __LINE__, #call, (int)st_, \
              uqf_last_error());                                      \
      ++failures;                                                     \
      return;                                                         \
    }                                                                 \
  } while (0)

static char workdir[1024];

static const char* in_work(const char* name) {
  static char buf[2048];
  snprintf(buf, sizeof buf, "%s/%s", workdir, name);
  return buf;
}

static void pipeline(void) {
  uqf_dataset *train = NULL, *shifted = NULL, *loaded = NULL, *adv = NULL;
  uqf_head* head = NULL;
  uqf_gp* gp = NULL;
  uqf_scores *scores = NULL, *reread = NULL;
  uqf_policy *policy = NULL, *policy2 = NULL;
  char *history = NULL, *report = NULL, *curve = NULL;
  double x[4], col[UQF_NUM_COLUMNS], w[UQF_NUM_COLUMNS], tau, score, prob, mean, var, acc;
  int label, pred;
  size_t i;

  OK(uqf_dataset_generate(40, 4, 2.0, 3, &train));
  CHECK(uqf_dataset_size(train) == 80);
  CHECK(uqf_dataset_dim(train) == 4);
  OK(uqf_dataset_get(train, 0, x, &label));
  CHECK(label == 0);
  OK(uqf_dataset_save(train, in_work("train.bin"), 1));
  OK(uqf_dataset_load(in_work("train.bin"), &loaded));
  CHECK(uqf_dataset_size(loaded) == 80);
  {
    double shift = 0.5;
    OK(uqf_dataset_shift(train, &shift, 1, 1.0, 4, &shifted));
    CHECK(uqf_dataset_size(shifted) == 80);
  }

  uqf_train_options to = uqf_train_options_default();
  to.epochs = 10;
  to.h1 = 8;
  to.h2 = 4;
  OK(uqf_head_train(train, &to, &head));
  OK(uqf_head_accuracy(head, train, &acc));
  CHECK(acc > 0.8);
  OK(uqf_head_prob(head, x, 4, &prob));
  CHECK(prob > 0.0 && prob < 1.0);
  CHECK(uqf_head_prob(head, x, 3, &prob) == UQF_ERR_INVALID);
  CHECK(strlen(uqf_last_error()) > 0);
  OK(uqf_head_save(head, in_work("head.json")));

  uqf_gp_options go = uqf_gp_options_default();
  go.m_per_class = 4;
  go.steps = 20;
  OK(uqf_gp_fit(train, &go, &gp));
  OK(uqf_gp_predict(gp, x, 4, &mean, &var));
  CHECK(var > 0.0);
  OK(uqf_gp_save(gp, in_work("gp.json")));

  uqf_score_options so = uqf_score_options_default();
  so.mc_passes = 5;
  so.threads = 2;
  OK(uqf_scores_compute(head, gp, train, &so, &scores));
  CHECK(uqf_scores_size(scores) == 80);
  OK(uqf_scores_get(scores, 3, &label, &pred, &prob, col));
  CHECK(col[0] > 0.0 && col[3] > 0.0);
  OK(uqf_scores_get(scores, 3, NULL, NULL, NULL, NULL));
  CHECK(uqf_scores_get(scores, 80, NULL, NULL, NULL, NULL) == UQF_ERR_INVALID);
  OK(uqf_scores_save(scores, in_work("scores.csv")));
  OK(uqf_scores_load(in_work("scores.csv"), &reread));
  CHECK(uqf_scores_size(reread) == 80);

  uqf_pso_options po = uqf_pso_options_default();
  po.swarm = 10;
  po.iters = 10;
  OK(uqf_calibrate(scores, &po, &policy, &score, &history));
  CHECK(score >= 0.0 && score <= 400.0);
  CHECK(history != NULL && strncmp(history, "iteration,best_score", 20) == 0);
  OK(uqf_policy_get(policy, w, &tau));
  for (i = 0; i < UQF_NUM_COLUMNS; ++i) CHECK(w[i] >= 0.0 && w[i] <= 1.0);
  OK(uqf_policy_save(policy, in_work("policy.json")));
  OK(uqf_policy_load(in_work("policy.json"), &policy2));

  OK(uqf_evaluate(reread, policy2, &report));
  CHECK(strstr(report, "\"combined\"") != NULL || strstr(report, "policy") != NULL);
  OK(uqf_sweep(scores, "gp_var", NULL, &tau, &score, &curve));
  CHECK(strncmp(curve, "tau,score", 9) == 0);
  CHECK(uqf_sweep(scores, "combined", NULL, &tau, &score, NULL) == UQF_ERR_INVALID);
  CHECK(uqf_sweep(scores, "nope", NULL, &tau, &score, NULL) == UQF_ERR_INVALID);

  {
    double a, p, r, f;
    OK(uqf_classification_metrics(7981, 19, 14, 7986, &a, &p, &r, &f));
    CHECK(a > 0.99785 && a < 0.99795);
  }

  OK(uqf_attack(head, train, 1, 0.1, 0.0, 3, 2, &adv));
  CHECK(uqf_dataset_size(adv) == 80);
  CHECK(uqf_attack(head, train, 7, 0.1, 0.0, 3, 1, &adv) == UQF_ERR_INVALID);

  CHECK(strcmp(uqf_column_name(3), "gp_var") == 0);
  CHECK(uqf_column_name(6) == NULL);
  CHECK(uqf_version() != NULL);

  uqf_string_free(history);
  uqf_string_free(report);
  uqf_string_free(curve);
  uqf_policy_free(policy);
  uqf_policy_free(policy2);
  uqf_scores_free(scores);
  uqf_scores_free(reread);
  uqf_gp_free(gp);
  uqf_head_free(head);
  uqf_dataset_free(train);
  uqf_dataset_free(shifted);
  uqf_dataset_free(loaded);
  uqf_dataset_free(adv);
}

static void errors(void) {
  uqf_dataset* d = NULL;
  uqf_head* h = NULL;
  char* resolved = NULL;
  CHECK(uqf_dataset_load(in_work("does_not_exist.csv"), &d) == UQF_ERR_IO);
  CHECK(d == NULL);
  CHECK(strstr(uqf_last_error_path(), "does_not_exist.csv") != NULL);

  {
    FILE* f = fopen(in_work("bad.csv"), "w");
    fputs("id,label,f0\na,0,1\nb,2,1\n", f);
    fclose(f);
  }
  CHECK(uqf_dataset_load(in_work("bad.csv"), &d) == UQF_ERR_PARSE);
  CHECK(uqf_last_error_line() == 3);

  {
    FILE* f = fopen(in_work("head.bad"), "w");
    fputs("{\"schema\":\"head/9\"}", f);
    fclose(f);
  }
  CHECK(uqf_head_load(in_work("head.bad"), &h) == UQF_ERR_PARSE);
  CHECK(uqf_dataset_generate(0, 4, 1.0, 0, &d) == UQF_ERR_INVALID);
  CHECK(uqf_dataset_generate(4, 4, 1.0, 0, NULL) == UQF_ERR_INVALID);
  CHECK(uqf_resolve_config("{\"head\":{\"lr\":0}}", &resolved) == UQF_ERR_INVALID);
  CHECK(uqf_resolve_config("{", &resolved) == UQF_ERR_PARSE);
  if (uqf_resolve_config("{}", &resolved) == UQF_OK) {
    CHECK(strstr(resolved, "\"seed\"") != NULL);
    uqf_string_free(resolved);
  } else {
    CHECK(0);
  }
  uqf_dataset_free(NULL);
  uqf_head_free(NULL);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: %s <workdir>\n", argv[0]);
    return 2;
  }
  snprintf(workdir, sizeof workdir, "%s", argv[1]);
  mkdir(workdir, 0755);
  pipeline();
  errors();
  if (failures) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  printf("C API checks passed\n");
  return 0;
}
