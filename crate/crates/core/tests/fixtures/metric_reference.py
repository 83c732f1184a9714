# Reference values for tests/metrics.rs, computed with pysodmetrics.
# Usage: PYTHONPATH=<py-sod-metrics>/src python3 metric_reference.py
import numpy as np
from py_sod_metrics import Smeasure, WeightedFmeasure, Emeasure
from py_sod_metrics.utils import EPS

def fx(name,h,w,gtf,pf):
    gt=np.array([[gtf(r,c) for c in range(w)] for r in range(h)],bool)
    pred=np.array([[pf(r*w+c, gt[r,c]) for c in range(w)] for r in range(h)],float)
    sm=Smeasure().cal_sm(pred,gt)
    wf=WeightedFmeasure().cal_wfm(pred,gt)
    e=Emeasure(); e.gt_fg_numel=np.count_nonzero(gt); e.gt_size=gt.size
    n=gt.size
    em=np.mean([e.cal_em_with_threshold(pred,gt,(k+0.5)/256)*(n-1+EPS)/n for k in range(256)])
    print(f"{name}: s={sm!r} wf={wf!r} e={em!r}")

fx("ellipse",12,10,lambda r,c:((r-5)/4)**2+((c-4)/3)**2<=1,lambda i,g:((i*37+11)%101)/100)
fx("blobs",16,16,lambda r,c:(3<=r<7 and 2<=c<12) or (r-11)**2+(c-10)**2<=9,lambda i,g:(0.6 if g else 0.1)+((i*53+7)%31)/100)
fx("band",9,13,lambda r,c:abs(r-c+2)<=1,lambda i,g:((i*19+3)%17)/16)
fx("halfcentroid",8,8,lambda r,c:2<=r<4 and 1<=c<4,lambda i,g:((i*7)%13)/12)
